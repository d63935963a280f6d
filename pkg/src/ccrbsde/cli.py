"""Command line entry point: ``ccrbsde run|validate|jump-example|factor-sweep``."""

import argparse
import json
import sys
from pathlib import Path

from .errors import CCRError
from .xva import fmt


def _error(exc, code=2):
    payload = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload), file=sys.stderr)
    return code


def cmd_run(args):
    from .pipeline import check_reproduction, load_manifest_or_config, run_scenario

    cfg, manifest = load_manifest_or_config(args.config)
    res = run_scenario(cfg, args.out, figures=not args.no_figures)
    print(f"run directory: {res.run_dir}")
    for k, v in res.manifest["summary"].items():
        print(f"{k}: {fmt(v)}")
    if manifest is not None:
        bad = check_reproduction(res, manifest)
        if bad:
            print("reproduction: MISMATCH in " + ", ".join(bad))
            return 1
        print("reproduction: identical")
    return 0


def cmd_validate(args):
    from .pipeline import validate_benchmark

    rep = validate_benchmark(N=args.N, m=args.m, K=args.K, seed=args.seed,
                             regression=args.regression, out_dir=args.out,
                             figures=not args.no_figures)
    print(rep.message())
    return 0 if rep.passed else 1


def cmd_jump(args):
    from .pipeline import run_jump_example

    rep = run_jump_example(args.alpha, args.beta, args.theta, args.xi, args.T, args.lam,
                           m=args.m, N=args.N, seed=args.seed, out_dir=args.out)
    print(rep.message())
    return 0


def cmd_sweep(args):
    from .config import ScenarioConfig
    from .pipeline import factor_sweep

    cfg = ScenarioConfig.load(args.config)
    res = factor_sweep(cfg, args.out, figures=not args.no_figures)
    print("F,Delta_T,err_S,err_Y,err_Z,residual_Z,state_bound")
    for row, b in zip(res.rows, res.bounds):
        print(",".join([str(row[0])] + [fmt(x) for x in row[1:]] + [fmt(b)]))
    if res.run_dir is not None:
        print(f"run directory: {res.run_dir}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="ccrbsde", description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run a scenario config or re-run a manifest")
    r.add_argument("config", type=Path)
    r.add_argument("--out", type=Path, default=Path("runs"))
    r.add_argument("--no-figures", action="store_true")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="exponential-terminal benchmark against its exact solution")
    v.add_argument("--N", type=int)
    v.add_argument("--m", type=int)
    v.add_argument("--K", type=int)
    v.add_argument("--seed", type=int)
    v.add_argument("--regression", choices=["condition", "joint", "direct"], default="condition")
    v.add_argument("--out", type=Path, default=Path("runs/validate"))
    v.add_argument("--no-figures", action="store_true")
    v.set_defaults(func=cmd_validate)

    j = sub.add_parser("jump-example", help="constant-intensity jump BSDE against its closed form")
    j.add_argument("--alpha", type=float, default=0.5)
    j.add_argument("--beta", type=float, default=0.1)
    j.add_argument("--theta", type=float, default=1.0)
    j.add_argument("--xi", type=float, default=2.0)
    j.add_argument("--T", type=float, default=1.0)
    j.add_argument("--lam", type=float, default=0.5)
    j.add_argument("--m", type=int, default=250)
    j.add_argument("--N", type=int, default=2000)
    j.add_argument("--seed", type=int, default=2016)
    j.add_argument("--out", type=Path)
    j.set_defaults(func=cmd_jump)

    f = sub.add_parser("factor-sweep", help="coupled reduced-factor runs for F = 1..n")
    f.add_argument("config", type=Path)
    f.add_argument("--out", type=Path, default=Path("runs"))
    f.add_argument("--no-figures", action="store_true")
    f.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CCRError as exc:
        return _error(exc)
    except OSError as exc:
        return _error(exc, 3)


if __name__ == "__main__":
    sys.exit(main())
