"""Run the collapse-dichotomy configuration for every strategy.

With ``--pin`` the final metrics are written to tests/golden/collapse_seed0.json,
which the acceptance suite compares against.
"""

import argparse
import json
import math
import time
from pathlib import Path

from klab.config import load_config
from klab.teacher import Strategy
from klab.trainer import run

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "collapse.yaml")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--pin", action="store_true")
    args = ap.parse_args()
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    floor = 0.75 * math.log(cfg.model.k)
    golden = {}
    for strategy in Strategy:
        t0 = time.perf_counter()
        report = run(cfg.replace(strategy=strategy))
        last = report.metrics[-1]
        golden[strategy.value] = {
            "effective_clusters": last.effective_clusters,
            "prior_entropy": last.prior_entropy,
            "nmi": last.nmi,
            "initial_nmi": report.initial_nmi,
        }
        trace = [round(m.effective_clusters, 2) for m in report.metrics[4::25]]
        print(
            f"{strategy.value:14s} eff={last.effective_clusters:6.2f} H={last.prior_entropy:.3f} (floor {floor:.3f}) "
            f"nmi={last.nmi:.3f} (base {report.initial_nmi:.3f}) collapse={report.collapse} "
            f"{time.perf_counter() - t0:.0f}s eff trace {trace}",
            flush=True,
        )
    if args.pin and args.seed is None:
        out = ROOT / "tests" / "golden" / "collapse_seed0.json"
        out.write_text(json.dumps(golden, indent=2) + "\n")
        print(f"pinned {out}")


if __name__ == "__main__":
    main()
