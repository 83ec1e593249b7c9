"""Covering-number entropies of an empirical measure.

``eps_entropy_Hprime`` computes ``ln k`` for a greedy set of eps-balls (closed
balls, centered at sample points) covering more than ``1 - eps`` of the
sample mass.  ``minimal_cover_bruteforce`` finds the exact minimum on small
samples, and ``eps_entropy_H_upper`` turns a net into a discrete measure whose
entropy bounds the Kantorovich-ball entropy from above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .metrics import distance_matrix
from .systems import EmpiricalSample
from .transport import DiscreteMeasure, SizeCap, TransportPlan, discrete_entropy, lemma3_plan

__all__ = [
    "CoveringNet",
    "EmpiricalSample",
    "HUpperBound",
    "InvalidEps",
    "cover_target",
    "eps_entropy_H_upper",
    "eps_entropy_Hprime",
    "greedy_net",
    "minimal_cover_bruteforce",
]

BRUTEFORCE_MAX = 15


class InvalidEps(ValueError):
    pass


@dataclass
class CoveringNet:
    centers: list[int]
    eps: float
    covered_mass: float
    ln_k: float

    @property
    def k(self) -> int:
        return len(self.centers)


def cover_target(m: int, eps: float) -> int:
    """Fewest points whose mass ``c/m`` exceeds ``1 - eps``."""
    return int(math.floor((1.0 - eps) * m + 1e-9)) + 1


def _check_eps(eps: float):
    if not 0.0 < eps < 1.0:
        raise InvalidEps(f"eps must lie in (0, 1), got {eps}")


def greedy_net(distances: np.ndarray, eps: float, strategy: str = "greedy") -> CoveringNet:
    """Centers among sample points until more than ``1 - eps`` of the mass is covered.

    ``greedy`` takes the ball covering the most uncovered points (lowest index
    on ties); ``farthest`` runs farthest-first traversal from point 0.
    """
    D = np.asarray(distances)
    m = D.shape[0]
    inside = D <= eps
    need = cover_target(m, eps)
    uncovered = np.ones(m, dtype=bool)
    n_covered = 0
    centers: list[int] = []
    if strategy == "greedy":
        gains = inside.sum(axis=0).astype(np.int64)
        while n_covered < need:
            c = int(np.argmax(gains))
            new = uncovered & inside[:, c]
            centers.append(c)
            n_covered += int(new.sum())
            gains -= inside[new].sum(axis=0)
            uncovered[new] = False
    elif strategy == "farthest":
        gap = np.full(m, np.inf)
        c = 0
        while n_covered < need:
            centers.append(c)
            new = uncovered & inside[:, c]
            n_covered += int(new.sum())
            uncovered[new] = False
            gap = np.minimum(gap, D[:, c])
            c = int(np.argmax(np.where(uncovered, gap, -np.inf)))
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return CoveringNet(centers, float(eps), n_covered / m, math.log(len(centers)))


def eps_entropy_Hprime(rho, sample: EmpiricalSample, eps: float, distances: np.ndarray | None = None,
                       strategy: str = "greedy") -> tuple[float, CoveringNet]:
    _check_eps(eps)
    D = distance_matrix(rho, sample) if distances is None else distances
    net = greedy_net(D, eps, strategy)
    return net.ln_k, net


def minimal_cover_bruteforce(sample: EmpiricalSample, rho, eps: float,
                             distances: np.ndarray | None = None) -> int:
    """Exact minimum number of sample-centered eps-balls covering > 1 - eps of the mass."""
    m = sample.m
    if m > BRUTEFORCE_MAX:
        raise SizeCap(f"brute force is limited to {BRUTEFORCE_MAX} points")
    D = distance_matrix(rho, sample) if distances is None else np.asarray(distances)
    need = cover_target(m, eps)
    masks = [sum(1 << i for i in range(m) if D[i, c] <= eps) for c in range(m)]
    for k in range(1, m + 1):
        for combo in combinations(masks, k):
            acc = 0
            for mask in combo:
                acc |= mask
            if acc.bit_count() >= need:
                return k
    return m


@dataclass
class HUpperBound:
    entropy: float  # H(nu), nats
    cost: float  # cost of the explicit plan, >= k(nu, mu)
    bound: float  # eps(1 - eps) + eps
    ln_k: float
    net: CoveringNet
    nu: DiscreteMeasure
    plan: TransportPlan


def eps_entropy_H_upper(rho, sample: EmpiricalSample, eps: float,
                        distances: np.ndarray | None = None) -> HUpperBound:
    """Upper bound on the entropy of measures within the Kantorovich ball of ``mu``.

    The witness ``nu`` satisfies ``k(nu, mu) <= cost < 2 eps``.
    """
    _check_eps(eps)
    D = distance_matrix(rho, sample) if distances is None else distances
    ln_k, net = eps_entropy_Hprime(rho, sample, eps, distances=D)
    nu, plan, bound = lemma3_plan(sample, net.centers, eps, rho, distances=D)
    return HUpperBound(discrete_entropy(nu), plan.cost, bound, ln_k, net, nu, plan)
