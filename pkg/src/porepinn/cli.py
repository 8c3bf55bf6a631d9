"""Command line: porepinn {train,evaluate,oracle,fdm,compare,bench}.

Exit codes: 0 success, 2 invalid configuration, 3 training divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .cases import CaseBundle, preset
from .config import OutputOptions, parse_case_config
from .harness import (benchmark, compare_activations, evaluate_model, fdm_solution, load_model, oracle_solution,
                      run_case, write_artifacts)
from .net import TrainingDivergence
from .oracles.grid import write_csv

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4


def _grid(text: str) -> tuple[int, int]:
    parts = text.lower().replace("x", " ").split()
    try:
        vals = tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be N or NxM, got {text!r}") from None
    if len(vals) == 1:
        vals = vals * 2
    if len(vals) != 2 or min(vals) < 2:
        raise argparse.ArgumentTypeError(f"grid must be N or NxM with N, M >= 2, got {text!r}")
    return vals


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="porepinn", description="Sine-network PDE solver for porous-media transport.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--case", help="built-in preset name")
        src.add_argument("--config", type=Path, help="case configuration file")
        sp.add_argument("--grid", type=_grid, help="evaluation grid N or NxM")
        if out:
            sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--refine", type=int, help="FDM oracle refinement factor")

    def training(sp):
        sp.add_argument("--seed", type=int)
        sp.add_argument("--activation", choices=("sine", "tanh"))
        sp.add_argument("--warmup", type=int, metavar="STEPS", help="Adam steps before L-BFGS")
        sp.add_argument("--max-iters", type=int)
        sp.add_argument("--smoke", action="store_true", help="reduced budgets (500 points, 200 iterations)")

    sp = sub.add_parser("train", help="train a case and evaluate it against its reference")
    common(sp); training(sp)
    sp = sub.add_parser("evaluate", help="evaluate a saved checkpoint against the reference")
    common(sp)
    sp.add_argument("--checkpoint", type=Path, required=True)
    sp = sub.add_parser("oracle", help="write the reference fields of a case")
    common(sp)
    sp = sub.add_parser("fdm", help="run the finite-difference solver alone")
    common(sp)
    sp = sub.add_parser("compare", help="sine versus tanh on a coupled case")
    common(sp); training(sp)
    sp.add_argument("--seeds", type=int, nargs="+", default=[0])
    sp = sub.add_parser("bench", help="inference versus FDM timing")
    common(sp)
    sp.add_argument("--checkpoint", type=Path)
    return p


def _load(args) -> tuple[CaseBundle, OutputOptions]:
    if args.case:
        bundle, out = preset(args.case), OutputOptions()
    else:
        loaded = parse_case_config(args.config)
        bundle, out = loaded.bundle, loaded.output
    if args.grid:
        bundle = bundle.replace(case=dataclasses.replace(bundle.case, grid=args.grid))
    if getattr(args, "smoke", False):
        bundle = bundle.smoke()
    if getattr(args, "seed", None) is not None:
        bundle = bundle.replace(seed=args.seed)
    if getattr(args, "activation", None):
        bundle = bundle.with_activation(args.activation)
    if getattr(args, "warmup", None) is not None:
        bundle = bundle.replace(warmup_steps=args.warmup)
    if getattr(args, "max_iters", None) is not None:
        bundle = bundle.replace(lbfgs=dataclasses.replace(bundle.train.lbfgs, max_iters=args.max_iters))
    if args.refine is not None:
        out = dataclasses.replace(out, oracle_refine=args.refine)
    return bundle, out


def _out_dir(args, out: OutputOptions, bundle: CaseBundle) -> Path:
    if getattr(args, "out", None):
        return args.out
    return Path(out.dir) if out.dir else Path("runs") / bundle.case.name


def _summary(art) -> str:
    return "\n".join(f"{f} {s} mse={m:.3e}" for (f, s), m in art.mse.items())


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        bundle, out = _load(args)
        out_dir = _out_dir(args, out, bundle)
        if args.command == "train":
            art = run_case(bundle, out_dir=out_dir, refine=out.oracle_refine, log_every=100 if args.verbose else 0)
            print(_summary(art))
            print(f"artifacts in {out_dir}")
        elif args.command == "evaluate":
            model = load_model(bundle.case, args.checkpoint)
            art = write_artifacts(evaluate_model(model, refine=out.oracle_refine), out_dir)
            print(_summary(art))
        elif args.command == "oracle":
            sol = oracle_solution(bundle.case, out.oracle_refine)
            out_dir.mkdir(parents=True, exist_ok=True)
            for (name, label), g in sol.fields.items():
                write_csv(g, out_dir / f"{name}_{label}_oracle.csv")
            for name, g in sol.velocity.items():
                write_csv(g, out_dir / f"{name}_oracle.csv")
            print(f"{len(sol.fields)} fields in {out_dir} ({sol.elapsed:.2f} s)")
        elif args.command == "fdm":
            nx, ny = bundle.case.grid
            fields, vel, info = fdm_solution(bundle.case, nx, ny, bundle.case.snapshots)
            out_dir.mkdir(parents=True, exist_ok=True)
            for key, g in {**fields, **vel}.items():
                write_csv(g, out_dir / f"{key.replace('@', '_t')}_fdm.csv")
            print(" ".join(f"{k}={v}" for k, v in info.items()))
        elif args.command == "compare":
            cmp = compare_activations(bundle, tuple(args.seeds), out.oracle_refine, out_dir)
            print(cmp.to_text(), end="")
        elif args.command == "bench":
            model = load_model(bundle.case, args.checkpoint) if args.checkpoint else None
            table = benchmark(bundle, model)
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "bench.txt").write_text(table.to_text())
            print(table.to_text(), end="")
    except ValueError as exc:  # includes ConfigError
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
