"""``hamop`` command line: gen, solve, train, eval, extend, bench.

Exit codes: 0 success, 1 usage, 2 data or validation problem, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .datafmt import export_csv, read_checkpoint, read_csv, read_dataset, write_checkpoint, write_dataset
from .deeponet import (
    DEFAULT_INF_LR,
    DEFAULT_INIT_LR,
    DEFAULT_UPPER_BOUND,
    DeepONetModel,
    SchedulerConfig,
    TrainConfig,
    train,
)
from .dynamics import HamiltonianSystem, generate_labels, hermite_resample, gl4_solve, rk4_solve
from .errors import (
    DivergenceDetected,
    DomainEscape,
    FixedPointDivergence,
    GenerationFailure,
    HamopError,
    InteriorBoundViolated,
    NonMonotoneBase,
)
from .estimators import SensorPotential
from .metrics import aggregate, batch_losses, format_stats_table
from .potgen import GeneratorConfig, generate_dataset
from .testpots import POTENTIAL_IDS, analytic_solution, get_named
from .unbounded import BASE_PRESETS, PolynomialBase, extended_potential, make_extension, valid_time

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3
DEFAULT_SEED = 42


class UsageError(Exception):
    pass


class GridMismatchExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _resolve_seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("NH_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"NH_SEED must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def _say(args, *parts):
    if not args.quiet:
        print(*parts)


# --- gen ---------------------------------------------------------------------------


def _dataset_meta(cfg, T, role, indices, dt):
    meta = {
        "T": T,
        "L": cfg.domain_length,
        "V0": cfg.potential_scale,
        "n_grf_range": list(cfg.n_grf_range),
        "omega": cfg.omega,
        "length_scale_range": list(cfg.length_scale_range),
        "seed": cfg.seed,
        "role": role,
        "indices": [int(i) for i in indices],
        "generator": cfg.to_dict(),
        "label_dt": dt,
    }
    return meta


def cmd_gen(args):
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    if args.m < 2:
        raise UsageError("--m must be >= 2")
    if args.split is not None and not 0 < args.split < 1:
        raise UsageError("--split must lie in (0, 1)")
    cfg = GeneratorConfig(n_sensors=args.m, seed=args.seed)
    pots = generate_dataset(cfg, args.n)
    labels = generate_labels(HamiltonianSystem.from_potentials(pots, cfg.domain_length), args.m, args.T, args.dt)
    V = np.stack([p.sensor_v for p in pots])
    arrays = {"t": labels.t, "V": V, "q": labels.q, "p": labels.p}
    out = Path(args.out)
    if args.split is None:
        write_dataset(out, _dataset_meta(cfg, args.T, args.role, range(args.n), args.dt), arrays)
        _say(args, f"wrote {args.n} samples to {out}")
        return EXIT_OK
    perm = np.random.default_rng(args.seed).permutation(args.n)
    n_train = int(round(args.split * args.n))
    for role, idx in (("train", np.sort(perm[:n_train])), ("val", np.sort(perm[n_train:]))):
        part = {"t": labels.t, "V": V[idx], "q": labels.q[idx], "p": labels.p[idx]}
        if len(idx) == 0:
            continue
        write_dataset(out / role, _dataset_meta(cfg, args.T, role, idx, args.dt), part)
        _say(args, f"wrote {len(idx)} {role} samples to {out / role}")
    return EXIT_OK


# --- solve -------------------------------------------------------------------------


def _load_sensor_file(path):
    path = Path(path)
    if not path.exists():
        raise UsageError(f"potential {str(path)!r} is neither a known id ({', '.join(POTENTIAL_IDS)}) nor a file")
    try:
        cols = read_csv(path)
        if "V" in cols:
            return cols["V"]
    except (ValueError, StopIteration):
        pass
    return np.loadtxt(path, dtype=float).ravel()


def cmd_solve(args):
    t = np.linspace(0.0, args.T, args.m)
    if args.potential in POTENTIAL_IDS:
        named = get_named(args.potential)
        if args.method == "exact":
            if not named.has_exact_solution:
                raise UsageError(f"no closed form for {args.potential}; exact is available for sho and mff")
            q, p = analytic_solution(named, t)
            export_csv({"t": t, "q": q, "p": p}, args.out, "trajectory")
            _say(args, f"wrote {args.out}")
            return EXIT_OK
        system = HamiltonianSystem.from_named(named)
    else:
        if args.method == "exact":
            raise UsageError("exact is only available for named potentials")
        system = SensorPotential(_load_sensor_file(args.potential)).system()
    if args.method == "rk4":
        traj = rk4_solve(system, T=args.T, n_nodes=args.m, check_domain=False)
    else:
        traj = hermite_resample(gl4_solve(system, T=args.T, dt=args.dt), args.m, args.T)
    traj = traj[0]
    export_csv({"t": traj.t, "q": traj.q, "p": traj.p}, args.out, "trajectory")
    _say(args, f"wrote {args.out}")
    return EXIT_OK


# --- train -------------------------------------------------------------------------


def cmd_train(args):
    meta, data = read_dataset(args.data)
    if args.epochs < 1:
        raise UsageError("--epochs must be >= 1")
    try:
        sched = SchedulerConfig(args.lr, args.inf_lr, args.upper_bound, min(args.epochs, args.upper_bound))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cfg = TrainConfig(batch_size=args.batch_size, epochs=args.epochs, scheduler=sched, seed=args.seed)
    _say(args, f"init_lr={args.lr:.4e} inf_lr={args.inf_lr:.4e} upper_bound={args.upper_bound}")
    m = data["V"].shape[1]
    model = DeepONetModel(m, args.branch_width, args.hidden, args.layers, rng=args.seed)
    Y = np.stack([data["q"], data["p"]], axis=-1)
    history_path = args.history or f"{args.ckpt}.history.csv"

    def report(row):
        if not args.quiet and (row["epoch"] % max(1, args.epochs // 10) == 0 or row["epoch"] == 1):
            print(f"epoch {row['epoch']:4d}  train {row['train_loss']:.4e}  val {row['val_loss']:.4e}  lr {row['lr']:.4e}")

    try:
        history = train(model, data["V"], Y, data["t"], cfg, callback=report)
    except DivergenceDetected as exc:
        export_csv(exc.history or [], history_path, "loss_history")
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    write_checkpoint(args.ckpt, model)
    export_csv(history, history_path, "loss_history")
    _say(args, f"wrote {args.ckpt} and {history_path}")
    return EXIT_OK


# --- eval / bench ------------------------------------------------------------------


def _single_predictor(spec, data, dt):
    """``predict(V_row) -> (q, p)`` for a method name or checkpoint path."""
    m = data["t"].shape[0]
    T = float(data["t"][-1])
    if spec == "rk4":
        def predict(v):
            tr = rk4_solve(SensorPotential(v).system(), T=T, n_nodes=m, check_domain=False)
            return tr.q[0], tr.p[0]
    elif spec == "gl4":
        def predict(v):
            tr = generate_labels(SensorPotential(v).system(), n_nodes=m, T=T, dt=dt)
            return tr.q[0], tr.p[0]
    elif spec == "exact":
        return None
    else:
        path = Path(spec)
        if not path.exists():
            raise UsageError(f"--pred must be rk4, gl4, exact or a checkpoint file, got {spec!r}")
        model = read_checkpoint(path)
        if model.m != m:
            raise GridMismatchExit(f"checkpoint expects {model.m} nodes, dataset has {m}")
        t = data["t"]

        def predict(v):
            out = model.predict_grid(v[None, :], t)[0]
            return out[:, 0], out[:, 1]
    return predict


def _check_grid(data):
    t = data["t"]
    expected = np.linspace(0.0, t[-1], len(t))
    if t[0] != 0.0 or not np.allclose(t, expected, rtol=0, atol=1e-12):
        raise GridMismatchExit("dataset time grid is not uniform from 0")


def cmd_eval(args):
    meta, data = read_dataset(args.data)
    _check_grid(data)
    predict = _single_predictor(args.pred, data, args.dt)
    N = data["V"].shape[0]
    q_pred = np.empty_like(data["q"])
    p_pred = np.empty_like(data["p"])
    times = np.zeros(N)
    if predict is None:
        q_pred[:], p_pred[:] = data["q"], data["p"]
    else:
        predict(data["V"][0])  # warm-up
        for i in range(N):
            t0 = time.perf_counter()
            q_pred[i], p_pred[i] = predict(data["V"][i])
            times[i] = time.perf_counter() - t0
    l_q, l_p, l_tot = batch_losses(data["q"], data["p"], q_pred, p_pred)
    rows = [
        {"sample_id": i, "l_q": l_q[i], "l_p": l_p[i], "l_tot": l_tot[i], "time_s": times[i]} for i in range(N)
    ]
    if args.report:
        export_csv(rows, args.report, "metrics")
    table = {"l_q": aggregate(l_q), "l_p": aggregate(l_p), "l_tot": aggregate(l_tot), "time_s": aggregate(times)}
    if not args.quiet:
        print(format_stats_table(table))
    if args.json:
        Path(args.json).write_text(json.dumps({k: v.as_dict() for k, v in table.items()}, indent=2) + "\n")
    return EXIT_OK


def cmd_bench(args):
    meta, data = read_dataset(args.data)
    methods = [s.strip() for s in args.methods.split(",") if s.strip()]
    if not methods:
        raise UsageError("--methods is empty")
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    N = data["V"].shape[0]
    table = {}
    for name in methods:
        spec = args.ckpt if name == "model" else name
        if name == "model" and not spec:
            raise UsageError("method 'model' needs --ckpt")
        if name not in ("rk4", "gl4", "model"):
            raise UsageError(f"unknown method {name!r}; choose from rk4, gl4, model")
        predict = _single_predictor(spec, data, args.dt)
        predict(data["V"][0])  # warm-up, discarded
        samples = []
        for _ in range(args.repeats):
            for i in range(N):
                t0 = time.perf_counter()
                predict(data["V"][i])
                samples.append(time.perf_counter() - t0)
        table[name] = aggregate(samples)
    if not args.quiet:
        print(format_stats_table(table))
        print(f"timings per method: {N * args.repeats}")
    if args.out:
        rows = {k: {**v.as_dict(), "n": N * args.repeats} for k, v in table.items()}
        Path(args.out).write_text(json.dumps(rows, indent=2) + "\n")
    return EXIT_OK


# --- extend ------------------------------------------------------------------------


def _parse_base(text):
    if text in BASE_PRESETS:
        return BASE_PRESETS[text]
    if text.startswith("poly:"):
        try:
            return PolynomialBase([float(c) for c in text[5:].split(",")])
        except ValueError:
            raise UsageError(f"bad polynomial {text!r}; expected poly:a0,a1,...") from None
    raise UsageError(f"unknown base {text!r}; use {', '.join(BASE_PRESETS)} or poly:a0,a1,...")


def cmd_extend(args):
    base = _parse_base(args.potential)
    V0 = float(base.value(0.0)) if args.V0 is None else args.V0
    T_valid = valid_time(base, V0, args.Q)
    spec = make_extension(base, args.Q, V0)
    q = np.linspace(0.0, 1.0, args.m)
    v = extended_potential(spec, args.m)
    if args.out:
        export_csv({"q": q, "V": v}, args.out, "potential")
    c3, c2, c1, c0 = spec.coeffs
    _say(args, f"P(q) = {c3:.17g} q^3 + {c2:.17g} q^2 + {c1:.17g} q + {c0:.17g}")
    print(f"T_valid = {T_valid:.12g}")
    return EXIT_OK


# --- parser ------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (falls back to $NH_SEED, then 42)")
    common.add_argument("--quiet", action="store_true", help="suppress informational output")

    p = _Parser(prog="hamop", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version", version=f"hamop {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate potentials and GL4 labels")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, default=100)
    g.add_argument("--T", type=float, default=2.0)
    g.add_argument("--dt", type=float, default=5e-4, help="GL4 step for the labels")
    g.add_argument("--split", type=float, default=None, help="train fraction; writes OUT/train and OUT/val")
    g.add_argument("--role", choices=("train", "test"), default="train")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", parents=[common], help="integrate one potential")
    s.add_argument("--potential", required=True, help=f"one of {', '.join(POTENTIAL_IDS)} or a sensor file")
    s.add_argument("--method", choices=("rk4", "gl4", "exact"), default="gl4")
    s.add_argument("--m", type=int, default=100)
    s.add_argument("--T", type=float, default=2.0)
    s.add_argument("--dt", type=float, default=1e-3, help="GL4 step")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_solve)

    t = sub.add_parser("train", parents=[common], help="train a DeepONet on a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--epochs", type=int, default=250)
    t.add_argument("--lr", type=float, default=DEFAULT_INIT_LR)
    t.add_argument("--inf-lr", type=float, default=DEFAULT_INF_LR)
    t.add_argument("--upper-bound", type=int, default=DEFAULT_UPPER_BOUND)
    t.add_argument("--batch-size", type=_positive_int, default=100)
    t.add_argument("--branch-width", type=_positive_int, default=10)
    t.add_argument("--hidden", type=_positive_int, default=128)
    t.add_argument("--layers", type=_positive_int, default=3)
    t.add_argument("--ckpt", required=True)
    t.add_argument("--history", default=None, help="loss history CSV (default CKPT.history.csv)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="score predictions against dataset labels")
    e.add_argument("--data", required=True)
    e.add_argument("--pred", required=True, help="rk4, gl4, exact or a checkpoint file")
    e.add_argument("--dt", type=float, default=5e-4)
    e.add_argument("--report", default=None, help="per-sample metrics CSV")
    e.add_argument("--json", default=None, help="aggregate statistics as JSON")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("extend", parents=[common], help="close an unbounded monotone potential")
    x.add_argument("--Q", type=float, required=True)
    x.add_argument("--potential", default="free-fall", help=f"{', '.join(BASE_PRESETS)} or poly:a0,a1,...")
    x.add_argument("--V0", type=float, default=None)
    x.add_argument("--m", type=int, default=100)
    x.add_argument("--out", default=None)
    x.set_defaults(func=cmd_extend)

    b = sub.add_parser("bench", parents=[common], help="per-trajectory wall time, batch size 1")
    b.add_argument("--data", required=True)
    b.add_argument("--methods", default="rk4,gl4")
    b.add_argument("--ckpt", default=None)
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--dt", type=float, default=5e-4)
    b.add_argument("--out", default=None, help="statistics as JSON")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.seed = _resolve_seed(args)
        if not args.quiet:
            flags = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
            print(f"hamop {__version__} seed={args.seed} flags={json.dumps(flags, default=str)}", file=sys.stderr)
        return args.func(args)
    except UsageError as exc:
        print(f"hamop: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GenerationFailure as exc:
        print(f"hamop: generation failed at index {exc.index}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GridMismatchExit as exc:
        print(f"hamop: grid mismatch: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InteriorBoundViolated, NonMonotoneBase) as exc:
        print(f"hamop: cannot extend this base: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FixedPointDivergence, DomainEscape) as exc:
        print(f"hamop: solver failure: {exc}", file=sys.stderr)
        return EXIT_DATA
    except HamopError as exc:
        print(f"hamop: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
