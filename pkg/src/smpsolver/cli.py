"""``smp`` command line interface.

Exit codes: 0 success, 1 comparison above threshold, 2 usage / I/O error,
3 model file syntax error, 4 invalid model, 5 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path

import numpy as np

from .errors import NumericalError, UndefinedQuantityError
from .model import classify_states
from .modelfile import ModelFileError, parse_model
from .quantities import SmpSolver
from .simulation import deviation_in_se, simulate_counts, summarise
from .transform import EulerConfig

EXIT_USAGE = 2
EXIT_NUMERIC = 5
QUANTITIES = ("P", "occupancy", "G", "g", "hazard", "v", "V", "M")
DATA_DIR = Path(__file__).parent / "data"


class UsageError(Exception):
    pass


def parse_times(spec: str) -> np.ndarray:
    """``linspace:start:stop:count``, a single time, or a comma list."""
    spec = spec.strip()
    try:
        if spec.startswith("linspace:"):
            parts = spec.split(":")[1:]
            if len(parts) != 3:
                raise ValueError
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
            if count < 1:
                raise ValueError
            times = np.linspace(start, stop, count)
        else:
            times = np.array([float(x) for x in spec.split(",") if x.strip()])
    except ValueError:
        raise UsageError(f"bad --times spec {spec!r}; use linspace:START:STOP:COUNT or t1,t2,...") from None
    if times.size == 0 or np.any(times <= 0):
        raise UsageError("times must be positive")
    return times


def resolve_model_path(name: str) -> Path:
    path = Path(name)
    if not path.exists() and (DATA_DIR / path.name).exists():
        return DATA_DIR / path.name
    return path


def _fmt(x) -> str:
    return f"{x:.9g}"


def _write_table(header, rows, out):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
    if out:
        Path(out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def _config(args) -> EulerConfig:
    try:
        return EulerConfig(A=args.euler_A, n_trunc=args.euler_N, m_euler=args.euler_M)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("SMP_THREADS", "1")))
    except ValueError:
        return 1


def _start(model, name):
    try:
        return model.index(name)
    except KeyError:
        raise UsageError(f"unknown state {name!r}; states are {', '.join(model.labels)}") from None


def _load(args):
    return parse_model(resolve_model_path(args.model), tolerance=getattr(args, "tolerance", None))


# -- subcommands -------------------------------------------------------


def cmd_validate(args) -> int:
    model = _load(args)
    classes = classify_states(model)
    print(f"{args.model}: valid, {model.n} states")
    for kind in ("transient", "recurrent", "absorbing"):
        names = classes.of_kind(kind)
        print(f"  {kind} ({len(names)}): {', '.join(names) if names else '-'}")
    return 0


def cmd_solve(args) -> int:
    model = _load(args)
    start = _start(model, args.start)
    times = parse_times(args.times)
    solver = SmpSolver(model, _config(args), _workers())
    q = args.quantity
    if q in ("v", "V") and args.k is None:
        raise UsageError(f"--k is required for quantity {q}")
    if q == "P":
        res = solver.state_probabilities(times, start)
    elif q == "occupancy":
        res = solver.expected_occupancy(times, start)
    elif q in ("G", "g"):
        res = solver.first_passage(times, start)[0 if q == "G" else 1]
    elif q == "hazard":
        res = solver.hazard(times, start)
    elif q == "v":
        res = solver.count_probability(args.k, times, start)
    elif q == "V":
        res = solver.count_cdf(args.k, times, start)
    else:
        res = solver.expected_visits(times, start)
    # Hazard keeps NaN for undefined targets; other kinds are clamped for display.
    values = (res.values if q == "hazard" else res.presented())[:, start, :]
    if not res.accuracy_guaranteed:
        print("warning: model has empirical kernels; inversion accuracy not guaranteed", file=sys.stderr)
    _write_table(["t", *model.labels], ([t, *row] for t, row in zip(times, values)), args.out)
    return 0


def cmd_asymptotic(args) -> int:
    model = _load(args)
    pi = SmpSolver(model, _config(args)).asymptotic_probabilities()
    for note in pi.warnings:
        print(f"warning: {note}", file=sys.stderr)
    values = np.clip(pi.values, 0.0, 1.0)
    _write_table(["state", *model.labels], ([lab, *row] for lab, row in zip(model.labels, values)), args.out)
    return 0


def cmd_simulate(args) -> int:
    model = _load(args)
    start = _start(model, args.start)
    if args.quantity in ("v", "V") and args.k is None:
        raise UsageError(f"--k is required for quantity {args.quantity}")
    if not args.horizon > 0 or args.n < 1:
        raise UsageError("--horizon must be positive and --n at least 1")
    times = parse_times(args.times) if args.times else np.linspace(args.horizon / 10, args.horizon, 10)
    if times.max() > args.horizon:
        raise UsageError("--times must not exceed --horizon")
    occupied, counts = simulate_counts(model, start, times, args.n, args.seed, _workers())
    est = summarise(model, start, args.quantity, times, occupied, counts, args.k)
    header = ["t"] + [x for lab in model.labels for x in (lab, f"{lab}_se")]
    rows = []
    for m, t in enumerate(est.times):
        row = [t]
        for j in range(model.n):
            row += [est.mean[m, j], est.stderr[m, j]]
        rows.append(row)
    _write_table(header, rows, args.out)
    return 0


def cmd_compare(args) -> int:
    model = _load(args)
    start = _start(model, args.start)
    times = np.sort(parse_times(args.times))
    solver = SmpSolver(model, _config(args), _workers())
    occupied, counts = simulate_counts(model, start, times, args.n, args.seed, _workers())
    analytic = {
        "P": solver.state_probabilities(times).values[:, start, :],
        "G": solver.first_passage(times)[0].values[:, start, :],
        "M": solver.expected_visits(times).values[:, start, :],
    }
    for k in range(args.kmax + 1):
        analytic[f"v({k})"] = solver.count_probability(k, times).values[:, start, :]
    worst = 0.0
    for name, values in analytic.items():
        kind = name[0]
        k = int(name[2:-1]) if kind == "v" else None
        est = summarise(model, start, kind, times, occupied, counts, k)
        dev = deviation_in_se(values, est)
        m, j = np.unravel_index(int(np.argmax(dev)), dev.shape)
        worst = max(worst, float(dev[m, j]))
        print(f"{name:6s} max deviation {dev[m, j]:6.2f} se  (t={_fmt(times[m])}, {model.labels[j]}: "
              f"analytic {_fmt(values[m, j])}, simulated {_fmt(est.mean[m, j])})")
    verdict = "PASS" if worst <= args.threshold else "FAIL"
    print(f"max deviation {worst:.2f} se over {args.n} trajectories: {verdict} (threshold {args.threshold})")
    return 0 if worst <= args.threshold else 1


# -- parser ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smp", description="Semi-Markov process solver")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, euler=True):
        p.add_argument("model", help="model file (JSON); bundled models such as kao.model are found by name")
        p.add_argument("--tolerance", type=float, default=None, help="row-sum tolerance (default 1e-9)")
        if euler:
            p.add_argument("--euler-A", dest="euler_A", type=float, default=18.4)
            p.add_argument("--euler-N", dest="euler_N", type=int, default=38, help="plain terms")
            p.add_argument("--euler-M", dest="euler_M", type=int, default=11, help="Euler-summation terms")

    p = sub.add_parser("validate", help="check a model file and classify its states")
    common(p, euler=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="compute a quantity on a time grid")
    common(p)
    p.add_argument("--quantity", required=True, choices=QUANTITIES)
    p.add_argument("--k", type=int, default=None, help="visit count for v and V")
    p.add_argument("--start", required=True)
    p.add_argument("--times", required=True, help="linspace:START:STOP:COUNT, or t1,t2,...")
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("asymptotic", help="limiting state probabilities")
    common(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_asymptotic)

    p = sub.add_parser("simulate", help="Monte Carlo estimates with standard errors")
    common(p, euler=False)
    p.add_argument("--start", required=True)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quantity", choices=("P", "G", "v", "V", "M"), default="P")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--times", help="grid within the horizon (default 10 equally spaced points)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="analytic solution against simulation")
    common(p)
    p.add_argument("--start", required=True)
    p.add_argument("--times", required=True)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kmax", type=int, default=2, help="largest k for v(k)")
    p.add_argument("--threshold", type=float, default=3.0, help="allowed deviation in standard errors")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"smp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelFileError as exc:
        for line in exc.diagnostics:
            print(f"smp: {line}", file=sys.stderr)
        return exc.exit_code
    except NumericalError as exc:
        print(f"smp: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except UndefinedQuantityError as exc:
        print(f"smp: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
