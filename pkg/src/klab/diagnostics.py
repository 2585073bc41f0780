"""Self-checks exposed on the command line: gradient check and Jensen audit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ClusterHead, init_encoder, init_head
from .numerics import l2_normalize, make_rng
from .objectives import cross_entropy_and_grad
from .teacher import jensen_gap_samples, jensen_gap_weights

GRADCHECK_TOL = 1e-5


def gradcheck(seed: int = 0, n: int = 3, k: int = 3, dim: int = 4, hidden=(5,), tau: float = 0.5, eps: float = 1e-5) -> float:
    """Max relative error between backprop and central differences over every parameter."""
    rng = make_rng(seed)
    params = init_encoder([dim, *hidden, dim], rng)
    params.biases = [0.3 * rng.standard_normal(b.shape) for b in params.biases]
    head = init_head(k, dim, rng)
    x = rng.standard_normal((n, dim))
    q = rng.dirichlet(np.ones(k), size=n)
    _, grads = cross_entropy_and_grad(params, head, x, q, tau)
    worst = 0.0
    for a, g in zip(params.arrays() + [head.weights], grads.arrays()):
        for idx in np.ndindex(a.shape):
            orig = a[idx]
            a[idx] = orig + eps
            up = cross_entropy_and_grad(params, head, x, q, tau)[0]
            a[idx] = orig - eps
            down = cross_entropy_and_grad(params, head, x, q, tau)[0]
            a[idx] = orig
            num = (up - down) / (2 * eps)
            denom = max(abs(num), abs(g[idx]), 1e-300)
            worst = max(worst, abs(num - g[idx]) / denom)
    return worst


@dataclass
class JensenAudit:
    instances: int
    weight_violations: int
    sample_violations: int
    k_exponent_bound_violations: int
    min_weight_log_gap: float
    mean_weight_log_gap: float
    min_sample_log_gap: float
    mean_sample_log_gap: float


def jensen_audit(instances: int = 100_000, seed: int = 0, slack: float = 1e-12) -> JensenAudit:
    """Fuzz both Jensen inequalities on random unit-norm instances.

    A violation is ``lhs < bound * (1 - slack)``. Also counts how often the
    ``exp(K z.w_bar/tau)`` form fails to lower-bound the normalizer.
    """
    rng = make_rng(seed)
    wv = sv = pv = 0
    wgaps, sgaps = [], []
    for _ in range(instances):
        k = int(rng.integers(2, 33))
        d = int(rng.integers(2, 17))
        tau = float(rng.uniform(0.05, 2.0))
        head = ClusterHead(l2_normalize(rng.standard_normal((k, d))))
        z = l2_normalize(rng.standard_normal(d))
        g = jensen_gap_weights(head, z, tau)
        wv += g.lhs < g.standard_bound * (1 - slack)
        pv += g.lhs < g.bound * (1 - slack)
        wgaps.append(np.log(g.lhs) - np.log(g.standard_bound))
        n = int(rng.integers(1, 33))
        lhs, bound = jensen_gap_samples(l2_normalize(rng.standard_normal((n, d))), head.weights[0], tau)
        sv += lhs < bound * (1 - slack)
        sgaps.append(np.log(lhs) - np.log(bound))
    wgaps = np.array(wgaps)
    sgaps = np.array(sgaps)
    return JensenAudit(
        instances, int(wv), int(sv), int(pv),
        float(wgaps.min()), float(wgaps.mean()), float(sgaps.min()), float(sgaps.mean()),
    )
