"""Command line entry point: run, verify, scaling, gen."""

import argparse
import configparser
import csv
import dataclasses
import io
import json
import os
import sys
import time

import numpy as np

from . import __version__, diff, learn, solvers, tasks, verify
from .owa import fair_gini_weights

TASKS = {
    "portfolio": (tasks.PortfolioTaskConfig, tasks.gen_portfolio),
    "grid": (tasks.GridTaskConfig, tasks.gen_grid_task),
    "rank": (tasks.RankTaskConfig, tasks.gen_rank_task),
}
RESULT_COLUMNS = ("task", "method", "seed", "split", "metric", "value", "wall_time")


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class RunConfig:
    task: str
    methods: list
    seeds: list
    out: str
    task_cfg: object
    train: dict
    method_train: dict

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {', '.join(TASKS)}")
        if not self.methods:
            raise ConfigError("at least one method is required")
        for m in self.methods:
            if m not in learn.TASK_METHODS[self.task]:
                raise ConfigError(
                    f"unknown method {m!r} for task {self.task}; "
                    f"choose from {', '.join(learn.TASK_METHODS[self.task])}"
                )

    def train_config(self, method, seed):
        kw = dict(self.train)
        kw.update(self.method_train.get(method, {}))
        try:
            return learn.default_train_config(self.task, method, seed=seed, **kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def echo(self):
        return {
            "task": self.task, "methods": self.methods, "seeds": self.seeds,
            "task_config": tasks._echo(self.task_cfg), "train": self.train,
            "method_train": self.method_train,
        }


def _coerce(value, default):
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        return tuple(float(v) for v in value.split(","))
    return value


def _dataclass_kwargs(cls, section):
    defaults = {f.name: f for f in dataclasses.fields(cls)}
    out = {}
    for key, raw in section.items():
        if key not in defaults:
            raise ConfigError(f"unknown option {key!r} for {cls.__name__}")
        f = defaults[key]
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        try:
            out[key] = _coerce(raw, default)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
    return out


def _int_list(text):
    return [int(v) for v in text.replace(" ", "").split(",") if v]


def _name_list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def load_config(path, seed=None, out=None, methods=None):
    """Parse an INI run configuration; CLI overrides win over the file."""
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keys are case-sensitive (N vs n)
    try:
        found = cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not found:
        raise ConfigError(f"cannot read config file {path!r}")
    if "run" not in cp:
        raise ConfigError("config needs a [run] section")
    run = cp["run"]
    task = run.get("task", "").strip()
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; choose from {', '.join(TASKS)}")
    cfg_cls, _ = TASKS[task]
    task_kw = _dataclass_kwargs(cfg_cls, cp["task"]) if "task" in cp else {}
    if task == "grid" and "speeds" in cp:
        task_kw["speeds"] = {k: tuple(float(v) for v in s.split(",")) for k, s in cp["speeds"].items()}
    seeds = [seed] if seed is not None else _int_list(run.get("seeds", "0"))
    task_kw.pop("seed", None)
    try:
        task_cfg = cfg_cls(**task_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    train = _dataclass_kwargs(learn.TrainConfig, cp["train"]) if "train" in cp else {}
    train.pop("seed", None)
    method_train = {}
    for name in cp.sections():
        if name.startswith("train."):
            method_train[name[len("train."):]] = _dataclass_kwargs(learn.TrainConfig, cp[name])
    return RunConfig(
        task=task,
        methods=methods if methods is not None else _name_list(run.get("methods", "")),
        seeds=seeds,
        out=out or run.get("out", "results"),
        task_cfg=task_cfg,
        train=train,
        method_train=method_train,
    )


# ---------------------------------------------------------------------------
# run


def _fmt(v):
    return "%.10g" % v


def _header_lines(echo, seed):
    return [f"# owapto {__version__}", f"# seed: {seed}", "# config: " + json.dumps(echo, sort_keys=True)]


def write_rows(path, rows, header_lines):
    buf = io.StringIO()
    for line in header_lines:
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for r in rows:
        writer.writerow([r[0], r[1], r[2], r[3], r[4], _fmt(r[5]), "%.3f" % r[6]])
    learn._atomic_write(path, buf.getvalue())


def _model_for(ds, seed):
    if ds.kind == "rank":
        return learn.Predictor.init(ds.Z.shape[-1], (1,), seed=seed)
    if ds.Z.ndim == 3:
        # shared per-tile network, one output per criterion
        return learn.Predictor.init(ds.Z.shape[-1], (ds.Y.shape[1], 1), seed=seed)
    return learn.Predictor.init(ds.Z.shape[1], ds.Y.shape[1:], seed=seed)


def _test_metrics(model, ds, method, cfg):
    idx = ds.splits["test"]
    preds, _, _ = learn._predictions(model, ds, idx)
    if ds.kind == "rank":
        decisions = [learn.decide_rank(ds, i, p, cfg, test=True) for i, p in zip(idx, preds)]
        ut, vi = zip(*(tasks.eval_ranking(P, ds.Y[i], ds.groups[i], ds.bias)
                       for i, P in zip(idx, decisions)))
        table = tasks.eval_regret_suite(decisions, ds, idx)
        out = table.summary()
        out["utility"] = float(np.mean(ut))
        out["violation"] = float(np.mean(vi))
        return out
    decisions = [learn.decide(ds, p) for p in preds]
    out = tasks.eval_regret_suite(decisions, ds, idx).summary()
    out["mse"] = float(np.mean((preds - ds.Y[idx]) ** 2))
    return out


def train_and_evaluate(ds, method, cfg, seed):
    """Train one model; returns ``(metrics, history, seconds)``."""
    t0 = time.perf_counter()
    model = _model_for(ds, seed)
    model, history = learn.train(model, ds, method, cfg)
    metrics = _test_metrics(model, ds, method, cfg)
    return metrics, history, time.perf_counter() - t0


def run_experiment(cfg, log=print):
    """Train every (method, seed); write per-run files and a merged summary."""
    os.makedirs(cfg.out, exist_ok=True)
    _, gen = TASKS[cfg.task]
    all_rows = []
    for seed in cfg.seeds:
        ds = gen(dataclasses.replace(cfg.task_cfg, seed=seed))
        variants = [(None, ds)]
        if cfg.task == "rank":
            variants = [(lam, ds.with_lambda(lam)) for lam in cfg.task_cfg.lambdas]
        for method in cfg.methods:
            tcfg = cfg.train_config(method, seed)
            rows, hist_rows = [], []
            for lam, d in variants:
                metrics, history, secs = train_and_evaluate(d, method, tcfg, seed)
                suffix = "" if lam is None else f"@lam={lam:g}"
                for name, value in metrics.items():
                    if not np.isfinite(value):
                        raise FloatingPointError(f"non-finite metric {name} for {method}")
                    rows.append((cfg.task, method, seed, "test", name + suffix, value, secs))
                for h in history:
                    hist_rows.append((cfg.task, method, seed, "train", "loss" + suffix + f"@epoch={h['epoch']}",
                                      h["train_loss"], 0.0))
                    hist_rows.append((cfg.task, method, seed, "val", "regret" + suffix + f"@epoch={h['epoch']}",
                                      h["val_regret"], 0.0))
                log(f"{cfg.task} {method} seed={seed}{suffix}: "
                    + ", ".join(f"{k}={v:.4g}" for k, v in metrics.items()) + f" ({secs:.1f}s)")
            header = _header_lines(cfg.echo(), seed)
            base = os.path.join(cfg.out, f"{cfg.task}_{method}_seed{seed}")
            write_rows(base + ".csv", rows, header)
            write_rows(base + "_history.csv", [r for r in hist_rows if np.isfinite(r[5])], header)
            all_rows.extend(rows)
    write_rows(os.path.join(cfg.out, f"{cfg.task}_summary.csv"), all_rows,
               _header_lines(cfg.echo(), ",".join(map(str, cfg.seeds))))
    return all_rows


# ---------------------------------------------------------------------------
# scaling


def _median_seconds(fn, args):
    times = []
    for a in args:
        t0 = time.perf_counter()
        fn(*a)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def run_scaling(ms=(2, 3, 4, 5, 6), n=10, reps=20, iters=300, beta=0.05, epsilon=1.0, seed=0):
    """Median forward+backward seconds per sample for both smoothed routes.

    The Moreau route runs a fixed number of Frank-Wolfe steps for every m so
    the timing reflects per-iteration cost.  Each route gets one untimed
    warm-up sample per m.
    """
    rng = np.random.default_rng(seed)
    rows = []

    def moreau(w, C, g):
        x = solvers.solve_owa_moreau_frankwolfe(w, C, beta, iters=iters).solution
        diff.backward_fixed_point(w, C, x, g, beta)

    def qp(w, C, g):
        diff.backward_qp_kkt(solvers.solve_owa_qp_reformulation(w, C, epsilon), g)

    for m in ms:
        w = fair_gini_weights(m)
        samples = [(w, rng.uniform(0.5, 1.5, (m, n)), rng.normal(size=n)) for _ in range(reps + 1)]
        moreau(*samples[0])
        rows.append({"route": "owa_moreau", "m": m, "constraints": m,
                     "seconds": _median_seconds(moreau, samples[1:]), "status": "ok"})
        count = solvers.qp_constraint_count(m)
        try:
            qp(*samples[0])
            rows.append({"route": "owa_qp", "m": m, "constraints": count,
                         "seconds": _median_seconds(qp, samples[1:]), "status": "ok"})
        except solvers.CapacityError as exc:
            rows.append({"route": "owa_qp", "m": m, "constraints": count, "seconds": float("nan"),
                         "status": f"refused: {exc}"})
    return rows


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    p = argparse.ArgumentParser(prog="owapto", description="OWA predict-then-optimize toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train and evaluate methods on a task")
    r.add_argument("--config", required=True, help="INI run configuration")
    r.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    r.add_argument("--out", help="output directory")
    r.add_argument("--methods", help="comma-separated method list")

    v = sub.add_parser("verify", help="run brute-force and finite-difference self-checks")
    v.add_argument("suites", nargs="+", help=f"one or more of: {', '.join(verify.SUITES)}, all")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", help="write a JSON report here")

    s = sub.add_parser("scaling", help="time the smoothed OWA routes across m")
    s.add_argument("--ms", default="2,3,4,5,6,7", help="comma-separated criteria counts")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--reps", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="write the table as CSV here")

    g = sub.add_parser("gen", help="write a synthetic dataset")
    g.add_argument("--config", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True, help="output CSV path")
    return p


def _cmd_run(args):
    methods = _name_list(args.methods) if args.methods is not None else None
    cfg = load_config(args.config, seed=args.seed, out=args.out, methods=methods)
    run_experiment(cfg)
    return 0


def _cmd_verify(args, parser):
    names = list(verify.SUITES) if args.suites == ["all"] else args.suites
    for name in names:
        if name not in verify.SUITES:
            parser.error(f"unknown suite {name!r}; choose from {', '.join(verify.SUITES)}, all")
    report, failed = [], 0
    for name in names:
        for check, ok, detail, secs in verify.run_verify(name, seed=args.seed):
            failed += not ok
            report.append({"suite": name, "check": check, "passed": ok, "detail": detail,
                           "seconds": round(secs, 3)})
            print(f"{'PASS' if ok else 'FAIL'} {name}.{check}: {detail}")
    summary = {"passed": len(report) - failed, "failed": failed, "checks": report}
    print(json.dumps({"passed": summary["passed"], "failed": failed}))
    if args.out:
        learn._atomic_write(args.out, json.dumps(summary, indent=2) + "\n")
    return 1 if failed else 0


def _cmd_scaling(args):
    rows = run_scaling(ms=_int_list(args.ms), n=args.n, reps=args.reps, seed=args.seed)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["route", "m", "constraints", "seconds", "status"])
    for r in rows:
        writer.writerow([r["route"], r["m"], r["constraints"], "%.6g" % r["seconds"], r["status"]])
    sys.stdout.write(buf.getvalue())
    if args.out:
        learn._atomic_write(args.out, f"# owapto {__version__}\n# seed: {args.seed}\n" + buf.getvalue())
    return 0


def _cmd_gen(args):
    cfg = load_config(args.config, seed=args.seed, methods=["two_stage"])
    _, gen = TASKS[cfg.task]
    ds = gen(dataclasses.replace(cfg.task_cfg, seed=cfg.seeds[0]))
    tasks.write_dataset(ds, args.out)
    print(f"wrote {ds.N} {cfg.task} samples to {args.out}")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "verify" and any(not s.strip() for s in args.suites):
        parser.error("suite name must not be empty")
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "verify":
            return _cmd_verify(args, parser)
        if args.command == "scaling":
            return _cmd_scaling(args)
        return _cmd_gen(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FloatingPointError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
