"""A priori statistics over n for the winding datum ``(cos x, sin x, 0)``.

The acceptance run for uniform bounds uses a constant datum.  This script
repeats the same sweep from the winding datum, which does not satisfy the
Neumann condition, and prints each statistic against n together with the
2-sigma trend verdict used by the acceptance test::

    python scripts/winding_uniform_bounds.py [--paths 100]
"""

import argparse
from pathlib import Path

from sllg.config import load_config
from sllg.ensemble import convergence_study, monotone_within

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "acceptance" / "uniform_bounds.ini"
STATS = ("l2_sup_sq", "sup_grad_sq", "int_cross_sq", "int_damping_l65", "besov_l65", "besov_l2", "besov_hm1")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=100)
    args = ap.parse_args()
    cfg = load_config(CONFIG, ["initial.family=winding", f"ensemble.num_paths={args.paths}"])
    rep = convergence_study(cfg)
    print(f"n = {rep.ns}")
    for name in STATS:
        means, ses = rep.column(name)
        verdict = "flat" if monotone_within(means, ses, direction=-1) else "increasing"
        cells = "  ".join(f"{m:.6g} +- {s:.2g}" for m, s in zip(means, ses))
        print(f"{name:16s} {verdict:10s} {cells}")


if __name__ == "__main__":
    main()
