"""Command-line entry point: ``grassrmc {synth,solve,bench,background}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
import argparse
import logging
from pathlib import Path
import sys

from . import _parallel
from .background import STABILITY_DELTA, default_config, default_schedule, run_background, subsample
from .bench import DEFAULT_SOLVERS, SOLVERS, run_bench
from .datagen import GroundTruth, SyntheticSpec, case_params, generate_synthetic, relative_difference, spectral_init
from .errors import RMCError
from .io import read_dense, read_matrix_market, read_pgm_stack, write_dense, write_log, write_matrix_market
from .objective import DEFAULT_LAMBDA, ProblemInstance
from .solvers import ContinuationSchedule, SolverConfig

logger = logging.getLogger("grassrmc")


class UsageError(Exception):
    pass


def _step_u(text):
    """``--t-u`` accepts a number or ``c/omega`` meaning ``c / |Omega|``."""
    text = text.strip().lower()
    if text.endswith("/omega"):
        coef = text[: -len("/omega")] or "1"
        try:
            return ("omega", float(coef))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad step '{text}'") from None
    try:
        return ("abs", float(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad step '{text}', use a number or c/omega") from None


def _positive(cast):
    def parse(text):
        try:
            v = cast(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid value '{text}'") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"expected a positive value, got '{text}'")
        return v
    return parse


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("solver")
    g.add_argument("--solver", choices=sorted(SOLVERS), help="algorithm (default amanpgc; bench runs manpg, amanpg, amanpgc)")
    g.add_argument("--rank", type=_positive(int), help="target rank r")
    g.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA, help="complement weight lambda (default %(default)g)")
    g.add_argument("--gamma0", type=_positive(float), help="initial l1 weight (default 10)")
    g.add_argument("--gamma-min", type=_positive(float), help="continuation floor (default 1e-4 * gamma0)")
    g.add_argument("--mu1", type=float, help="gamma shrink factor (default 0.1)")
    g.add_argument("--mu2", type=float, help="epsilon shrink factor (default 0.1)")
    g.add_argument("--eps0", type=_positive(float), help="initial tolerance; also the tolerance of non-continuation runs (default 30)")
    g.add_argument("--t-s", type=_positive(float), help="S step size (default 1)")
    g.add_argument("--t-u", type=_step_u, help="U step size, a number or c/omega (default 2/omega)")
    g.add_argument("--max-iters", type=_positive(int), help="iteration cap per run or round (default 500)")
    g.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    g.add_argument("--threads", type=int, default=1, help="worker threads for the kernels; 0 means all cores (default 1)")
    f = common.add_argument_group("data")
    f.add_argument("--input", help="input file or directory")
    f.add_argument("--output", help="output file or directory")
    f.add_argument("--case", action="append", help="synthetic case, e.g. case1-scaled; bench accepts repeats or commas")
    f.add_argument("--sampling", type=float, help="sampling ratio / observed pixel fraction")
    f.add_argument("--outliers", type=float, help="outlier ratio")
    f.add_argument("--log", help="convergence CSV path")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="grassrmc", description="Robust matrix completion on the Grassmann manifold.")
    sub = parser.add_subparsers(dest="command", metavar="{synth,solve,bench,background}")
    sub.required = True
    sub.add_parser("synth", parents=[common], help="generate a synthetic instance",
                   description="Write a synthetic case as MatrixMarket plus ground-truth factors.")
    sub.add_parser("solve", parents=[common], help="solve an instance from a MatrixMarket file",
                   description="Recover U, V (dense binary) and S (MatrixMarket) from observations.")
    sub.add_parser("bench", parents=[common], help="run synthetic benchmark cases",
                   description="Run cases and write one CSV log per (case, solver) plus summary.csv.")
    sub.add_parser("background", parents=[common], help="estimate a video background from PGM frames",
                   description="Subsample pixels, fit low-rank plus sparse, write background and foreground frames.")
    return parser


def _schedule(args, base=None):
    base = base or ContinuationSchedule()
    kw = {}
    for key, attr in (("gamma0", "gamma0"), ("gamma_min", "gamma_min"), ("mu1", "mu1"), ("mu2", "mu2"), ("eps0", "epsilon0")):
        v = getattr(args, key)
        if v is not None:
            kw[attr] = v
    if base.gamma_min is not None and "gamma0" in kw and "gamma_min" not in kw:
        # keep a data-scaled floor proportional when only gamma0 changes
        kw["gamma_min"] = base.gamma_min / base.gamma0 * kw["gamma0"]
    try:
        return ContinuationSchedule(**{**base.__dict__, **kw})
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _config(args, obs, base=None):
    base = base or SolverConfig()
    kw = {}
    if args.t_s is not None:
        kw["t_S"] = args.t_s
    if args.t_u is not None:
        kind, v = args.t_u
        kw["t_U"] = v / obs.nnz if kind == "omega" else v
    if args.max_iters is not None:
        kw["max_iters"] = args.max_iters
    if args.eps0 is not None:
        kw["epsilon"] = args.eps0
    try:
        return SolverConfig(**{**base.__dict__, **kw})
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) in (None, [])]
    if missing:
        raise UsageError(f"{args.command} requires {', '.join(missing)}")


def _truth_paths(prefix):
    p = str(prefix)
    return Path(p + ".U.bin"), Path(p + ".V.bin"), Path(p + ".S.mtx")


def _stem(path):
    p = Path(path)
    return p.with_suffix("") if p.suffix == ".mtx" else p


def cmd_synth(args, out):
    _require(args, "case", "output")
    if len(args.case) != 1 or "," in args.case[0]:
        raise UsageError("synth takes a single --case")
    try:
        params = case_params(args.case[0])
    except KeyError:
        raise UsageError(f"unknown case '{args.case[0]}'") from None
    spec = SyntheticSpec(
        params["m"], params["n"], args.rank or params["r"],
        params["sampling"] if args.sampling is None else args.sampling,
        params["outliers"] if args.outliers is None else args.outliers,
        args.seed,
    )
    problem, truth = generate_synthetic(spec, lam=args.lam)
    stem = _stem(args.output)
    Path(stem).parent.mkdir(parents=True, exist_ok=True)
    write_matrix_market(str(stem) + ".mtx", problem.obs)
    pu, pv, ps = _truth_paths(stem)
    write_dense(pu, truth.U_star)
    write_dense(pv, truth.V_star)
    write_matrix_market(ps, problem.obs, truth.S_star)
    print(f"wrote {stem}.mtx: {spec.m}x{spec.n}, r={spec.r}, |Omega|={problem.obs.nnz}", file=out)
    return 0


def cmd_solve(args, out):
    _require(args, "input", "rank", "output")
    obs = read_matrix_market(args.input)
    if not args.rank < obs.m:
        raise UsageError(f"--rank must be below the row count {obs.m}")
    solver = args.solver or "amanpgc"
    fn, continuation = SOLVERS[solver]
    schedule = _schedule(args)
    problem = ProblemInstance(obs, args.rank, lam=args.lam, gamma=schedule.gamma0)
    config = _config(args, obs)

    metric = None
    pu, pv, ps = _truth_paths(_stem(args.input))
    if pu.exists() and pv.exists():
        truth = GroundTruth(read_dense(pu), read_dense(pv), None)
        metric = lambda U, V: relative_difference(U, V, truth)  # noqa: E731
        logger.info("ground truth found next to %s", args.input)

    U0, S0 = spectral_init(obs, args.rank, seed=args.seed)
    if continuation:
        sol = fn(problem, schedule, config, U0, S0, metric=metric)
    else:
        # config.epsilon already carries --eps0 when given
        sol = fn(problem, config, U0, S0, metric=metric)

    stem = Path(args.output)
    stem.parent.mkdir(parents=True, exist_ok=True)
    write_dense(str(stem) + ".U.bin", sol.U.basis)
    write_dense(str(stem) + ".V.bin", sol.V)
    write_matrix_market(str(stem) + ".S.mtx", obs, sol.S)
    write_log(args.log or str(stem) + ".csv", sol.records)
    rel = sol.records[-1].rel_diff if sol.records else None
    print(f"{solver}: {sol.status.value} after {sol.iterations} iterations ({sol.rounds} rounds), "
          f"F = {sol.objective:.6e}" + (f", rel_diff = {rel:.3e}" if rel is not None else ""), file=out)
    return 0


def cmd_bench(args, out):
    cases = [c for item in (args.case or []) for c in item.split(",") if c]
    for c in cases:
        try:
            case_params(c)
        except KeyError:
            raise UsageError(f"unknown case '{c}'") from None
    solvers = [args.solver] if args.solver else list(DEFAULT_SOLVERS)
    schedule = None
    if any(getattr(args, k) is not None for k in ("gamma0", "gamma_min", "mu1", "mu2", "eps0")):
        schedule = _schedule(args)
    kw, t_u_scale = {}, None
    if args.t_u is not None:
        kind, v = args.t_u
        if kind == "omega":
            t_u_scale = v
        else:
            kw["t_U"] = v
    if args.t_s is not None:
        kw["t_S"] = args.t_s
    if args.max_iters is not None:
        kw["max_iters"] = args.max_iters
    try:
        config = SolverConfig(**kw) if kw else None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return run_bench(cases, solvers, output_dir=args.output or ".", seed=args.seed, lam=args.lam,
                     schedule=schedule, config=config, t_u_scale=t_u_scale,
                     sampling=args.sampling, outliers=args.outliers, out=out)


def cmd_background(args, out):
    _require(args, "input", "output")
    fraction = 0.5 if args.sampling is None else args.sampling
    if not 0 < fraction <= 1:
        raise UsageError("--sampling must lie in (0, 1]")
    # schedule and steps default to values scaled by the observed data
    stack = read_pgm_stack(args.input)
    obs = subsample(stack.pixels, fraction, args.seed)
    schedule = _schedule(args, default_schedule(obs))
    config = _config(args, obs, default_config(obs))
    code = run_background(stack, args.output, fraction, rank=args.rank or 2, seed=args.seed,
                          schedule=schedule, config=config, delta=STABILITY_DELTA,
                          lam=args.lam, log_path=args.log)
    print(f"wrote {stack.frame_count} background frames to {args.output}", file=out)
    return code


COMMANDS = {"synth": cmd_synth, "solve": cmd_solve, "bench": cmd_bench, "background": cmd_background}


def cli_main(argv=None, out=None):
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    _parallel.set_threads(args.threads if args.threads > 0 else None)
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"grassrmc: error: {exc}", file=sys.stderr)
        return 2
    except (RMCError, OSError, ValueError) as exc:
        print(f"grassrmc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main())
