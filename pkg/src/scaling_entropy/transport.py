"""Discrete measures, Shannon entropy and exact Kantorovich distances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .metrics import IteratedMetric
from .systems import EmpiricalSample, orbit_states

DEFAULT_ATOM_CAP = 2000
MASS_TOL = 1e-9
GAP_TOL = 1e-9


class InvalidMeasure(ValueError):
    pass


class SizeCap(ValueError):
    pass


class NotACover(ValueError):
    pass


class CertificateError(RuntimeError):
    pass


@dataclass
class DiscreteMeasure:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1 or len(self.weights) != len(self.atoms):
            raise InvalidMeasure("one weight per atom required")
        if (self.weights < 0).any():
            raise InvalidMeasure("negative weight")
        if abs(self.weights.sum() - 1.0) > MASS_TOL:
            raise InvalidMeasure(f"weights sum to {self.weights.sum():.12g}, not 1")

    @classmethod
    def uniform(cls, atoms) -> DiscreteMeasure:
        atoms = np.asarray(atoms)
        return cls(atoms, np.full(len(atoms), 1.0 / len(atoms)))

    @classmethod
    def dirac(cls, atom) -> DiscreteMeasure:
        return cls(np.asarray([atom]), np.ones(1))

    @classmethod
    def empirical(cls, sample: EmpiricalSample) -> DiscreteMeasure:
        return cls(sample.points, sample.weights)

    def __len__(self):
        return len(self.atoms)

    def merged(self) -> DiscreteMeasure:
        """Combine duplicate atoms, dropping zero weights."""
        keep = self.weights > 0
        atoms, w = self.atoms[keep], self.weights[keep]
        flat = atoms.reshape(len(atoms), -1)
        uniq, inv = np.unique(flat, axis=0, return_inverse=True)
        return DiscreteMeasure(uniq.reshape((len(uniq),) + atoms.shape[1:]),
                               np.bincount(inv.ravel(), weights=w, minlength=len(uniq)))


def discrete_entropy(nu: DiscreteMeasure) -> float:
    """``-sum c ln c`` in nats over merged atoms."""
    c = nu.merged().weights
    c = c[c > 0]
    return float(-(c * np.log(c)).sum())


@dataclass
class TransportPlan:
    coupling: np.ndarray
    cost: float
    dual_gap: float | None = None
    u: np.ndarray | None = None
    v: np.ndarray | None = None

    def marginal_error(self, a, b) -> float:
        return float(max(np.abs(self.coupling.sum(1) - a).max(), np.abs(self.coupling.sum(0) - b).max()))


def cross_distances(rho, A, B) -> np.ndarray:
    """``rho(A[i], B[j])`` for all i, j."""
    A, B = np.asarray(A), np.asarray(B)
    if isinstance(rho, IteratedMetric):
        sa, _ = orbit_states(rho.system, A, rho.n)
        sb, _ = orbit_states(rho.system, B, rho.n)
        rows = rho.base.evaluate(sa[:, :, None], sb[:, None, :])
        return rho._combine(rows)
    if A.ndim > 1 or B.ndim > 1:
        raise TypeError("atoms are symbol buffers; pass visible words or an IteratedMetric")
    return rho.pairwise(A, B)


def solve_transport(a, b, C) -> TransportPlan:
    """Exact optimal coupling of weight vectors ``a``, ``b`` under cost ``C``.

    Solved as a linear program (HiGHS dual simplex).  The returned dual pair is
    made exactly feasible by a c-transform, so ``dual_gap`` bounds the
    suboptimality of the primal cost.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    m, n = C.shape
    rows = sparse.kron(sparse.eye(m), np.ones((1, n)))
    cols = sparse.kron(np.ones((1, m)), sparse.eye(n))
    A_eq = sparse.vstack([rows, cols]).tocsr()
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise CertificateError(f"transport LP failed: {res.message}")
    P = np.maximum(res.x.reshape(m, n), 0.0)
    cost = float((P * C).sum())
    duals = res.eqlin.marginals
    u = duals[:m].copy()
    v = np.min(C - u[:, None], axis=0)  # c-transform: u_i + v_j <= C_ij holds exactly
    u = np.min(C - v[None, :], axis=1)
    dual = float(a @ u + b @ v)
    return TransportPlan(P, cost, cost - dual, u, v)


def transport_bruteforce(a, b, C) -> float:
    """Optimal cost by enumerating every basic feasible coupling.

    Each vertex of the transportation polytope is the unique solution of the
    marginal equations restricted to ``m + n - 1`` cells (one redundant
    equation dropped).  Meant for a handful of atoms per side.
    """
    from itertools import combinations

    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    m, n = C.shape
    if m * n > 36:
        raise SizeCap("vertex enumeration is limited to 36 cells")
    A_eq = np.vstack([np.kron(np.eye(m), np.ones(n)), np.kron(np.ones(m), np.eye(n))])[:-1]
    rhs = np.concatenate([a, b])[:-1]
    r = m + n - 1
    subsets = np.array(list(combinations(range(m * n), r)), dtype=np.int64)
    mats = A_eq[:, subsets].transpose(1, 0, 2)
    ok = np.abs(np.linalg.det(mats)) > 0.5  # bases of this 0/1 system have determinant +-1
    x = np.linalg.solve(mats[ok], np.broadcast_to(rhs, (int(ok.sum()), r))[..., None])[..., 0]
    feasible = (x >= -1e-12).all(axis=1)
    costs = (C.ravel()[subsets[ok]] * x).sum(axis=1)
    return float(costs[feasible].min())


def kantorovich(mu: DiscreteMeasure, nu: DiscreteMeasure, rho, cap: int = DEFAULT_ATOM_CAP,
                gap_tol: float = GAP_TOL) -> tuple[float, TransportPlan]:
    """Exact Kantorovich distance between two discrete measures."""
    for x in (mu, nu):
        if abs(x.weights.sum() - 1.0) > MASS_TOL or (x.weights < 0).any():
            raise InvalidMeasure("weights must be nonnegative and sum to 1")
    if len(mu) + len(nu) > cap:
        raise SizeCap(f"{len(mu) + len(nu)} atoms exceed the cap of {cap}")
    C = cross_distances(rho, mu.atoms, nu.atoms)
    plan = solve_transport(mu.weights, nu.weights, C)
    if plan.dual_gap > gap_tol:
        raise CertificateError(f"duality gap {plan.dual_gap:.3g} exceeds {gap_tol:g}")
    return plan.cost, plan


def lemma3_plan(sample: EmpiricalSample, net, eps: float, rho, distances: np.ndarray | None = None
                ) -> tuple[DiscreteMeasure, TransportPlan, float]:
    """Transport the empirical measure onto an eps-net.

    Each covered point sends its mass in equal parts to every center whose
    eps-ball contains it (only to the centers at distance 0, if there are any); uncovered mass goes to an overflow atom placed at the
    first center.  The returned ``nu`` lists the centers followed by the
    overflow atom.  ``bound`` is ``eps(1 - eps) + eps``, which the plan cost
    cannot exceed when the metric has diameter <= 1.

    ``distances`` may be a precomputed full ``(m, m)`` matrix of ``rho`` on
    the sample.
    """
    net = np.asarray(net, dtype=np.int64)
    if net.size == 0:
        raise NotACover("empty net")
    if distances is None:
        D = cross_distances(rho, sample.points, sample.points[net])
    else:
        D = np.asarray(distances)[:, net]
    w = sample.weights
    inside = D <= eps
    # a point at distance 0 from some center keeps its mass on those centers
    at_zero = D == 0
    has_zero = at_zero.any(axis=1)
    inside = np.where(has_zero[:, None], at_zero, inside)
    counts = inside.sum(axis=1)
    covered = counts > 0
    covered_mass = float(w[covered].sum())
    if covered_mass < 1.0 - eps - MASS_TOL:
        raise NotACover(f"net covers {covered_mass:.6g} < 1 - eps = {1 - eps:.6g}")
    k = len(net)
    coupling = np.zeros((sample.m, k + 1))
    share = np.where(covered, w / np.maximum(counts, 1), 0.0)
    coupling[:, :k] = inside * share[:, None]
    coupling[~covered, k] = w[~covered]
    dist = np.concatenate([D, D[:, :1]], axis=1)
    cost = float((coupling * dist).sum())
    atoms = np.concatenate([sample.points[net], sample.points[net[:1]]])
    weights = coupling.sum(axis=0)
    weights = weights / weights.sum()
    nu = DiscreteMeasure(atoms, weights)
    return nu, TransportPlan(coupling, cost), eps * (1.0 - eps) + eps
