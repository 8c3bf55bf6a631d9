"""Short training runs for choosing per-case hyperparameters.

    python scripts/tune.py case1 --omega0 10 --iters 2000 --memory 10 --warmup 0
    python scripts/tune.py case3 --iters 1500 --refine 1 --w-b 10
"""

import argparse
import dataclasses
import logging
import time

import numpy as np

from porepinn.cases import preset
from porepinn.harness import SPACE_TIME, run_case


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("case")
    ap.add_argument("--omega0", type=float)
    ap.add_argument("--iters", type=int, default=2000)
    ap.add_argument("--memory", type=int)
    ap.add_argument("--warmup", type=int)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--activation")
    ap.add_argument("--out")
    ap.add_argument("--log-every", type=int, default=500)
    ap.add_argument("--refine", type=int, default=2, help="FDM oracle refinement; 1 is fast but coarser")
    ap.add_argument("--w-b", type=float)
    ap.add_argument("--w-p", type=float)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    b = preset(args.case)
    if args.omega0:
        b = b.replace(net=dataclasses.replace(b.net, first_layer_frequency=args.omega0))
    if args.activation:
        b = b.with_activation(args.activation)
    lb = dataclasses.replace(b.train.lbfgs, max_iters=args.iters)
    if args.memory is not None:
        lb = dataclasses.replace(lb, memory=args.memory)
    b = b.replace(lbfgs=lb, seed=args.seed)
    if args.warmup is not None:
        b = b.replace(warmup_steps=args.warmup)
    w = b.train.weights
    if args.w_b is not None:
        w = dataclasses.replace(w, w_b=args.w_b)
    if args.w_p is not None:
        w = dataclasses.replace(w, w_p=args.w_p)
    b = b.replace(weights=w)
    t0 = time.time()
    art = run_case(b, out_dir=args.out, refine=args.refine, log_every=args.log_every)
    print(f"{args} time={time.time() - t0:.0f}s loss={art.report.final_loss:.3e} {art.report.final_terms}")
    for (f, s), m in art.mse.items():
        print(f"  {f} {s} mse={m:.3e} max={art.error[(f, s)].values.max():.3e}")
    if (("C", SPACE_TIME)) in art.error:
        e = art.error[("C", SPACE_TIME)].values
        t = art.error[("C", SPACE_TIME)].y
        rows = np.mean(e**2, axis=1)
        for j in (0, 1, 2, 5, 10, 20, 30, 50, 100):
            print(f"  t={t[j]:.2f} row_mse={rows[j]:.2e} max={e[j].max():.2e} at x={art.error[('C', SPACE_TIME)].x[e[j].argmax()]:.2f}")


if __name__ == "__main__":
    main()
