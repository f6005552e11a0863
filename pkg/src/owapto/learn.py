"""Predictive models, losses and the decision-focused training loop.

A small numpy MLP with manual backprop: a shared ReLU trunk whose widths halve
layer by layer, then one ReLU hidden layer and a linear output per criterion.
"""

from dataclasses import dataclass
import json
import os
import tempfile

import numpy as np

from . import diff, solvers
from .geometry import project_simplex, simplex_projection_jacobian
from .owa import owa_subgradient, owa_value

METHODS = ("two_stage", "uws", "owa_qp", "owa_moreau", "surrogate_lp", "spo_rank")
TASK_METHODS = {
    "portfolio": ("two_stage", "uws", "owa_qp", "owa_moreau"),
    "grid": ("two_stage", "uws", "surrogate_lp"),
    "rank": ("two_stage", "spo_rank"),
}
CHECKPOINT_MAGIC = "owapto-predictor-v1"


# ---------------------------------------------------------------------------
# model


@dataclass
class Predictor:
    """Shared trunk plus ``m`` per-criterion heads producing ``(m, n)`` outputs.

    ``params`` is a flat list ``[W0, b0, W1, b1, ...]``: trunk layers first,
    then each head's hidden and output layers.  ``n_trunk`` counts trunk
    layers; each head has ``head_depth`` layers (the last one linear).
    """

    params: list
    n_trunk: int
    m: int
    head_depth: int = 2
    vector_output: bool = False
    seed: int = 0
    activation: str = "relu"

    @classmethod
    def init(cls, d_in, out_shape, hidden=None, n_shared=3, seed=0):
        out_shape = tuple(np.atleast_1d(out_shape))
        vector_output = len(out_shape) == 1
        m, n = (1, int(out_shape[0])) if vector_output else (int(out_shape[0]), int(out_shape[1]))
        if hidden is None:
            hidden = [max(2, (2 * d_in) >> k) for k in range(n_shared)]
        rng = np.random.default_rng(seed)
        params = []

        def layer(fan_in, fan_out):
            bound = 1.0 / np.sqrt(fan_in)
            params.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            params.append(rng.uniform(-bound, bound, fan_out))

        widths = [d_in] + list(hidden)
        for a, b in zip(widths[:-1], widths[1:]):
            layer(a, b)
        h = widths[-1]
        for _ in range(m):
            layer(h, h)
            layer(h, n)
        return cls(params, len(hidden), m, 2, vector_output, seed)

    @classmethod
    def linear(cls, W, b=None):
        """Single linear map ``z -> z W + b`` (no trunk, one head)."""
        W = np.asarray(W, dtype=np.float64)
        b = np.zeros(W.shape[1]) if b is None else np.asarray(b, dtype=np.float64)
        return cls([W, b], 0, 1, 1, True)

    @property
    def n_params(self):
        return int(sum(p.size for p in self.params))

    @property
    def d_in(self):
        return self.params[0].shape[0]

    def zero_like(self):
        return [np.zeros_like(p) for p in self.params]

    def _head_slices(self):
        start = 2 * self.n_trunk
        step = 2 * self.head_depth
        return [slice(start + k * step, start + (k + 1) * step) for k in range(self.m)]

    def forward(self, Z):
        """Batch forward; returns ``(out, cache)`` with ``out`` of shape (B, m, n)."""
        Z = np.asarray(Z, dtype=np.float64)
        if Z.ndim != 2 or Z.shape[1] != self.d_in:
            raise ValueError(f"expected features of shape (B, {self.d_in}), got {Z.shape}")
        acts = [Z]
        h = Z
        for i in range(self.n_trunk):
            h = np.maximum(h @ self.params[2 * i] + self.params[2 * i + 1], 0.0)
            acts.append(h)
        outs, head_acts = [], []
        for sl in self._head_slices():
            P = self.params[sl]
            ha = [h]
            u = h
            for j in range(self.head_depth):
                u = u @ P[2 * j] + P[2 * j + 1]
                if j < self.head_depth - 1:
                    u = np.maximum(u, 0.0)
                    ha.append(u)
            outs.append(u)
            head_acts.append(ha)
        return np.stack(outs, axis=1), (acts, head_acts)

    def backward(self, cache, dout):
        """Parameter gradients for output cotangent ``dout`` (B, m, n)."""
        acts, head_acts = cache
        grads = self.zero_like()
        dh = np.zeros_like(acts[-1])
        for k, sl in enumerate(self._head_slices()):
            P = self.params[sl]
            ha = head_acts[k]
            d = dout[:, k, :]
            for j in reversed(range(self.head_depth)):
                idx = sl.start + 2 * j
                grads[idx] += ha[j].T @ d
                grads[idx + 1] += d.sum(axis=0)
                d = d @ P[2 * j].T
                if j > 0:
                    d = d * (ha[j] > 0)
            dh += d
        for i in reversed(range(self.n_trunk)):
            dh = dh * (acts[i + 1] > 0)
            grads[2 * i] += acts[i].T @ dh
            grads[2 * i + 1] += dh.sum(axis=0)
            dh = dh @ self.params[2 * i].T
        return grads


def predict(model, z):
    """Predicted parameters: ``(n,)`` or ``(m, n)`` for one sample, batched otherwise."""
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    out, _ = model.forward(z[None] if single else z)
    if model.vector_output:
        out = out[:, 0, :]
    return out[0] if single else out


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    def __init__(self, params, lr=1e-2, betas=(0.9, 0.999), eps=1e-8):
        if not lr > 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ---------------------------------------------------------------------------
# losses


def loss_two_stage(C_hat, C_true):
    """Squared Frobenius error."""
    D = np.asarray(C_hat, dtype=np.float64) - np.asarray(C_true, dtype=np.float64)
    return float(np.sum(D * D))


def loss_two_stage_grad(C_hat, C_true):
    return 2.0 * (np.asarray(C_hat, dtype=np.float64) - np.asarray(C_true, dtype=np.float64))


def loss_owa_dq(w, C_true, x_star):
    """Decision quality ``OWA_w(C_true x*)`` (to be maximized)."""
    return owa_value(w, np.asarray(C_true) @ np.asarray(x_star))


def loss_owa_dq_grad(w, C_true, x_star):
    C_true = np.asarray(C_true, dtype=np.float64)
    return C_true.T @ owa_subgradient(w, C_true @ np.asarray(x_star))


def regret(w, C_true, x_star, owa_star):
    return float(owa_star - loss_owa_dq(w, C_true, x_star))


# ---------------------------------------------------------------------------
# training configuration


@dataclass
class TrainConfig:
    lr: float = 1e-2
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    mse_weight: float = 0.0
    beta: float = 0.05          # Moreau smoothing (owa_moreau)
    epsilon: float = 1.0        # QP smoothing (owa_qp)
    uws_epsilon: float = 1.0    # quadratic smoothing of the sum-objective LP (uws)
    lambda_bb: float = diff.LAMBDA_BB
    rank_T: int = solvers.RANK_TRAIN_ITERS
    rank_T_test: int = solvers.RANK_TEST_ITERS
    rank_beta0: float = solvers.RANK_BETA0
    keep_best: bool = True

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch size must be >= 1 and epochs >= 0")
        if not 0.0 <= self.mse_weight <= 1.0:
            raise ValueError("mse_weight must lie in [0, 1]")


# per (task, method) defaults; anything in a config file overrides these
METHOD_DEFAULTS = {
    ("portfolio", "two_stage"): {"lr": 5e-3, "mse_weight": 1.0, "epochs": 60},
    ("portfolio", "uws"): {"mse_weight": 0.3, "epochs": 60},
    ("portfolio", "owa_moreau"): {"mse_weight": 0.1, "beta": 0.2, "epochs": 60},
    ("portfolio", "owa_qp"): {"mse_weight": 0.4, "epochs": 60},
    ("grid", "two_stage"): {"lr": 5e-3, "mse_weight": 1.0, "epochs": 100, "batch_size": 10},
    ("grid", "uws"): {"mse_weight": 0.9, "lambda_bb": 1.0, "epochs": 100, "batch_size": 10},
    ("grid", "surrogate_lp"): {"mse_weight": 0.9, "lambda_bb": 1.0, "epochs": 100, "batch_size": 10},
    ("rank", "two_stage"): {"lr": 5e-3, "mse_weight": 1.0},
    ("rank", "spo_rank"): {"lr": 0.1, "mse_weight": 0.0},
}


def default_train_config(task, method, **overrides):
    base = dict(METHOD_DEFAULTS.get((task, method), {}))
    base.update(overrides)
    return TrainConfig(**base)


# ---------------------------------------------------------------------------
# per-task decisions, objectives and sample gradients


def _check_method(kind, method):
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method not in TASK_METHODS[kind]:
        raise ValueError(f"method {method!r} is not defined for the {kind} task")


def decide(ds, pred):
    """Decision induced by prediction ``pred`` for one sample of ``ds``.

    Portfolio: projected subgradient on the predicted OWA program.  Grid: the
    shortest path under the summed predicted costs.
    """
    if ds.kind == "portfolio":
        return solvers.solve_owa_projected_subgradient(ds.w, pred).solution
    if ds.kind == "grid":
        return solvers.solve_shortest_path(ds.graph, pred.sum(axis=0))
    if ds.kind == "rank":
        raise TypeError("ranking decisions need the sample's group structure; use decide_rank")
    raise ValueError(f"unknown task kind {ds.kind!r}")


def decide_rank(ds, i, c_hat, cfg, test=True):
    T = cfg.rank_T_test if test else cfg.rank_T
    return solvers.solve_fair_ranking_fw(c_hat, ds.groups[i], ds.bias, ds.lam, ds.w,
                                         beta0=cfg.rank_beta0, T=T).Pi


def objective(ds, i, decision):
    """True objective (maximized) of ``decision`` on sample ``i``."""
    if ds.kind == "portfolio":
        return owa_value(ds.w, ds.Y[i] @ decision)
    if ds.kind == "grid":
        return owa_value(ds.w, -(ds.Y[i] @ decision))
    return solvers.fair_ranking_objective(decision, ds.Y[i], ds.groups[i], ds.bias, ds.lam, ds.w)


def sample_regret(ds, i, pred, method, cfg, test=True):
    if ds.kind == "rank":
        dec = decide_rank(ds, i, pred, cfg, test)
    else:
        dec = decide(ds, pred)
    return ds.reference(i) - objective(ds, i, dec)


def _mix(cfg, dq, pred, C_true):
    """``(1 - lam) * dq + lam * dMSE`` with the MSE averaged over entries."""
    return (1 - cfg.mse_weight) * dq + cfg.mse_weight * loss_two_stage_grad(pred, C_true) / C_true.size


def sample_grad(ds, i, pred, method, cfg):
    """``(dLoss/dpred, loss)`` for one sample; the loss is minimized."""
    C_true = ds.Y[i]
    mse_val = loss_two_stage(pred, C_true) / C_true.size
    if method == "two_stage" or cfg.mse_weight >= 1.0:
        return loss_two_stage_grad(pred, C_true) / C_true.size, mse_val
    w = ds.w
    if ds.kind == "portfolio":
        if method == "owa_moreau":
            x = solvers.solve_owa_moreau(w, pred, cfg.beta).solution
            g = -loss_owa_dq_grad(w, C_true, x)
            dq = diff.backward_fixed_point(w, pred, x, g, cfg.beta)
        elif method == "owa_qp":
            rep = solvers.solve_owa_qp_reformulation(w, pred, cfg.epsilon)
            x = rep.solution
            g = -loss_owa_dq_grad(w, C_true, x)
            dq = diff.backward_qp_kkt(rep, g)
        elif method == "uws":
            # smoothed sum-objective LP: x = proj_simplex(C_hat^T 1 / (2 eps))
            s = pred.sum(axis=0) / (2 * cfg.uws_epsilon)
            x = project_simplex(s)
            g = -C_true.sum(axis=0)
            r = simplex_projection_jacobian(s) @ g / (2 * cfg.uws_epsilon)
            dq = np.broadcast_to(r, pred.shape).copy()
            return _mix(cfg, dq, pred, C_true), float(g @ x)
        else:
            raise ValueError(method)
        loss = -loss_owa_dq(w, C_true, x)
        return _mix(cfg, dq, pred, C_true), loss
    if ds.kind == "grid":
        c_sum = pred.sum(axis=0)
        x = solvers.solve_shortest_path(ds.graph, c_sum)
        if method == "uws":
            g = C_true.sum(axis=0)
            loss = float(g @ x)
        elif method == "surrogate_lp":
            # minimize the OWA-aggregated path costs: -OWA(-C x)
            g = C_true.T @ owa_subgradient(w, -(C_true @ x))
            loss = -owa_value(w, -(C_true @ x))
        else:
            raise ValueError(method)
        r = diff.backward_blackbox_lp(ds.graph, c_sum, g, cfg.lambda_bb, x_hat=x)
        dq = np.broadcast_to(r, pred.shape).copy()
        return _mix(cfg, dq, pred, C_true), loss
    if ds.kind == "rank":
        if method != "spo_rank":
            raise ValueError(method)
        dq = diff.spo_plus_for_owa_rank(pred, C_true, ds.groups[i], ds.bias, ds.lam, w,
                                        beta0=cfg.rank_beta0, T=cfg.rank_T)
        return _mix(cfg, dq, pred, C_true), mse_val
    raise ValueError(f"unknown task kind {ds.kind!r}")


# ---------------------------------------------------------------------------
# training


def _features(ds, idx):
    """Model inputs for samples ``idx``; per-item features flatten into rows."""
    Z = ds.Z[idx]
    return Z.reshape(-1, Z.shape[-1])


def _predictions(model, ds, idx):
    """``(preds, cache, pull)``: task-shaped predictions and the map taking a
    cotangent on ``preds`` back to the model output layout."""
    out, cache = model.forward(_features(ds, idx))
    B = len(idx)
    shape = out.shape
    if ds.Z.ndim == 3:
        # one model row per item or tile: (B*n, m, 1) -> (B, m, n)
        n = ds.Z.shape[1]
        preds = out[:, :, 0].reshape(B, n, -1).transpose(0, 2, 1)
        if ds.kind == "rank":
            preds = preds[:, 0, :]
            return preds, cache, lambda d: d.reshape(shape)
        return preds, cache, lambda d: d.transpose(0, 2, 1).reshape(shape)
    if model.vector_output:
        return out[:, 0, :], cache, lambda d: d.reshape(shape)
    return out, cache, lambda d: d.reshape(shape)


def evaluate_regret(model, ds, idx, method, cfg, test=True):
    """Per-sample regret of ``model``'s decisions on samples ``idx``."""
    preds, _, _ = _predictions(model, ds, np.asarray(idx))
    return np.array([sample_regret(ds, i, p, method, cfg, test) for i, p in zip(idx, preds)])


def train(model, ds, method, cfg):
    """Mini-batch training; returns ``(model, history)``.

    ``history`` holds one dict per epoch with the mean training loss and the
    mean validation regret.  With ``cfg.keep_best`` the parameters from the
    epoch with the lowest validation regret are restored at the end.
    """
    _check_method(ds.kind, method)
    if not all(np.all(np.isfinite(p)) for p in model.params):
        raise FloatingPointError("model parameters are not finite before training")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, lr=cfg.lr)
    train_idx = np.asarray(ds.splits["train"])
    val_idx = np.asarray(ds.splits["val"])
    history = []
    best_val = evaluate_regret(model, ds, val_idx, method, cfg, test=False).mean() if len(val_idx) else np.inf
    best_params = [p.copy() for p in model.params]
    history.append({"epoch": 0, "train_loss": float("nan"), "val_regret": float(best_val)})
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(train_idx)
        losses = []
        for start in range(0, len(perm), cfg.batch_size):
            batch = perm[start:start + cfg.batch_size]
            preds, cache, pull = _predictions(model, ds, batch)
            dpred = np.empty_like(preds)
            for k, (i, p) in enumerate(zip(batch, preds)):
                dpred[k], loss = sample_grad(ds, i, p, method, cfg)
                losses.append(loss)
            if not np.all(np.isfinite(dpred)):
                raise FloatingPointError(
                    f"non-finite gradient in epoch {epoch} ({method}, {ds.kind}); "
                    "try a smaller learning rate"
                )
            grads = model.backward(cache, pull(dpred) / len(batch))
            opt.step(model.params, grads)
        mean_loss = float(np.mean(losses))
        if not np.isfinite(mean_loss) or not all(np.all(np.isfinite(p)) for p in model.params):
            raise FloatingPointError(f"non-finite loss in epoch {epoch} ({method}, {ds.kind})")
        val = evaluate_regret(model, ds, val_idx, method, cfg, test=False).mean() if len(val_idx) else np.nan
        history.append({"epoch": epoch, "train_loss": mean_loss, "val_regret": float(val)})
        if cfg.keep_best and val < best_val:
            best_val = val
            best_params = [p.copy() for p in model.params]
    if cfg.keep_best and len(val_idx):
        model.params = best_params
    return model, history


# ---------------------------------------------------------------------------
# checkpoints: one JSON header line, then each array row-major, one per line


def save_checkpoint(model, path):
    header = {
        "format": CHECKPOINT_MAGIC,
        "activation": model.activation,
        "seed": int(model.seed),
        "n_trunk": int(model.n_trunk),
        "m": int(model.m),
        "head_depth": int(model.head_depth),
        "vector_output": bool(model.vector_output),
        "shapes": [[int(k) for k in p.shape] for p in model.params],
    }
    lines = [json.dumps(header)]
    lines += [" ".join("%.17g" % v for v in p.ravel()) for p in model.params]
    _atomic_write(path, "\n".join(lines) + "\n")


def load_checkpoint(path):
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a predictor checkpoint")
        params = []
        for shape in header["shapes"]:
            vals = np.array(fh.readline().split(), dtype=np.float64)
            params.append(vals.reshape(shape))
    return Predictor(params, header["n_trunk"], header["m"], header["head_depth"],
                     header["vector_output"], header["seed"], header["activation"])


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# the fixed nonlinear feature map used by the synthetic generators


@dataclass
class RandomFeatureMap:
    """Fixed-seed two-layer ReLU network ``z = W2 relu(W1 t + b1) + noise``."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    noise: float = 0.0

    @classmethod
    def create(cls, d_in, d_out, hidden=None, noise=0.1, seed=0):
        rng = np.random.default_rng(seed)
        hidden = hidden or 2 * d_in
        W1 = rng.normal(0, 1 / np.sqrt(d_in), (d_in, hidden))
        b1 = rng.normal(0, 0.5, hidden)
        W2 = rng.normal(0, 1 / np.sqrt(hidden), (hidden, d_out))
        return cls(W1, b1, W2, noise)

    def __call__(self, T, rng):
        T = np.asarray(T, dtype=np.float64)
        Z = np.maximum(T @ self.W1 + self.b1, 0.0) @ self.W2
        if self.noise > 0:
            Z = Z + rng.normal(0, self.noise, Z.shape)
        return Z
