"""Sweep data difficulty and report the collapse dichotomy per strategy."""

import itertools
import sys

from klab.config import MixtureConfig, RunConfig
from klab.synthdata import AugmentationSpec
from klab.teacher import Strategy
from klab.trainer import run


def main(epochs=200):
    print("dim sigma noise strategy init_nmi nmi eff_final ent_frac collapse")
    for dim, sigma, noise in itertools.product((8, 16), (0.2, 0.35, 0.5), (0.05, 0.2)):
        for s in Strategy:
            cfg = RunConfig(
                mixture=MixtureConfig(input_dim=dim, sigma=sigma),
                augmentation=AugmentationSpec(noise, 0.1),
                strategy=s,
            )
            cfg = cfg.replace(schedule=cfg.schedule.__class__(epochs_total=epochs))
            r = run(cfg)
            m = r.metrics[-1]
            print(dim, sigma, noise, s.value, f"{r.initial_nmi:.3f} {m.nmi:.3f} {m.effective_clusters:.2f} "
                  f"{m.prior_entropy / 2.7726:.2f} {r.collapse}", flush=True)


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 200)
