"""Admissible (semi)metrics, orbit combinators and numeric probes.

Evaluators are vectorized: they take two broadcastable arrays of *states*
(float64 circle coordinates, or packed uint64 binary words as produced by
``systems.orbit_states``) and return float64 distances.  ``Semimetric.__call__``
also accepts scalars and ``BitWord`` objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Iterator, Sequence

import numpy as np

from .systems import (
    BitWord,
    EmpiricalSample,
    SystemSpec,
    depth_mask,
    orbit,
    orbit_states,
    trailing_zeros,
)

MODES = ("average", "sup", "lp")
TRIANGLE_TOL = 1e-12


class LengthMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# cells
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Arc:
    """Half-open arc ``[lo, hi)`` of the circle; wraps through 0 when lo > hi."""

    lo: float
    hi: float

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.lo <= self.hi:
            return (x >= self.lo) & (x < self.hi)
        return (x >= self.lo) | (x < self.hi)

    def __str__(self):
        return f"[{self.lo:g},{self.hi:g})"


@dataclass(frozen=True)
class Cylinder:
    """Binary words starting with ``prefix``."""

    prefix: str

    def contains(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.uint64)
        target = np.uint64(BitWord.from_string(self.prefix).packed())
        return (w & depth_mask(len(self.prefix))) == target

    def __str__(self):
        return f"[{self.prefix}]"


def _as_state(x):
    if isinstance(x, BitWord):
        return np.uint64(x.packed())
    return x


# ---------------------------------------------------------------------------
# semimetrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Semimetric:
    evaluator: Callable[[Any, Any], np.ndarray]
    name: str
    is_metric: bool
    bounded: bool = True
    diameter_hint: float | None = None
    domain: str = "any"  # "circle", "word" or "any"
    # cut-type metrics expose cell labels so orbit sums reduce to matrix products
    labeler: Callable[[Any], np.ndarray] | None = None
    # name of a compiled accumulation loop in ``_kernels`` (same values as evaluator)
    kernel: tuple | None = None
    scale: float = 1.0
    min_length: int = 1

    def __call__(self, x, y):
        if isinstance(x, BitWord) or isinstance(y, BitWord):
            if not (isinstance(x, BitWord) and isinstance(y, BitWord)):
                raise TypeError("both arguments must be BitWords")
            if x.N != y.N:
                raise LengthMismatch(f"word lengths differ: {x.N} vs {y.N}")
            if x.N < self.min_length:
                raise LengthMismatch(f"{self.name} needs words of length >= {self.min_length}")
        out = self.evaluate(_as_state(x), _as_state(y))
        return float(out) if np.ndim(out) == 0 else out

    def evaluate(self, x, y) -> np.ndarray:
        return self.scale * np.asarray(self.evaluator(x, y), dtype=np.float64)

    def pairwise(self, X, Y=None) -> np.ndarray:
        X = np.asarray(X)
        Y = X if Y is None else np.asarray(Y)
        return self.evaluate(X[:, None], Y[None, :])

    @property
    def diameter(self) -> float | None:
        return None if self.diameter_hint is None else self.scale * self.diameter_hint

    def normalized(self) -> Semimetric:
        """Rescale a bounded metric to diameter 1."""
        if not self.bounded or not self.diameter_hint or self.diameter == 1.0:
            return self
        return replace(self, scale=1.0 / self.diameter_hint, name=f"{self.name}/diam")


def cut_semimetric(cells: Sequence, name: str | None = None) -> Semimetric:
    """0 on the same cell, 1 otherwise.  Cells must partition the space."""
    cells = tuple(cells)
    if not cells:
        raise ValueError("need at least one cell")

    def labeler(x):
        inside = np.stack([np.broadcast_to(c.contains(x), np.shape(x)) for c in cells])
        if not inside.any(axis=0).all():
            raise ValueError("point outside every cell of the partition")
        return np.argmax(inside, axis=0)

    def ev(x, y):
        return (labeler(x) != labeler(y)).astype(np.float64)

    domain = "word" if all(isinstance(c, Cylinder) for c in cells) else "circle" if all(
        isinstance(c, Arc) for c in cells) else "any"
    return Semimetric(ev, name or "cut" + "".join(map(str, cells)), is_metric=False, bounded=True,
                      diameter_hint=1.0, domain=domain, labeler=labeler)


def indicator_semimetric(A, name: str | None = None) -> Semimetric:
    """``|1_A(x) - 1_A(y)|``."""

    def labeler(x):
        return np.asarray(A.contains(x)).astype(np.int64)

    def ev(x, y):
        return (labeler(x) != labeler(y)).astype(np.float64)

    domain = "word" if isinstance(A, Cylinder) else "circle" if isinstance(A, Arc) else "any"
    return Semimetric(ev, name or f"indicator{A}", is_metric=False, bounded=True, diameter_hint=1.0,
                      domain=domain, labeler=labeler)


def arc_metric() -> Semimetric:
    def ev(x, y):
        d = np.abs(np.asarray(x, dtype=np.float64) - y) % 1.0
        return np.minimum(d, 1.0 - d)

    return Semimetric(ev, "arc", is_metric=True, bounded=True, diameter_hint=0.5, domain="circle",
                      kernel=("arc",))


def dyadic_metric() -> Semimetric:
    """``2^-n`` with ``n`` the 1-based index of the first differing symbol."""

    def ev(x, y):
        v = np.bitwise_xor(np.asarray(x, dtype=np.uint64), np.asarray(y, dtype=np.uint64))
        tz = trailing_zeros(v)
        return np.where(tz < 0, 0.0, np.ldexp(1.0, -(tz + 1)))

    return Semimetric(ev, "dyadic", is_metric=True, bounded=True, diameter_hint=0.5, domain="word",
                      kernel=("dyadic",))


def hamming_window_metric(k: int) -> Semimetric:
    """Normalized Hamming distance on the first ``k`` coordinates."""
    if not 1 <= k <= 64:
        raise ValueError("window length must be in 1..64")
    mask = depth_mask(k)

    def ev(x, y):
        v = np.bitwise_xor(np.asarray(x, dtype=np.uint64), np.asarray(y, dtype=np.uint64)) & mask
        return np.bitwise_count(v).astype(np.float64) / k

    return Semimetric(ev, f"hamming_window(k={k})", is_metric=(k == 64), bounded=True,
                      diameter_hint=1.0, domain="word", min_length=k, kernel=("hamming", k))


def constant_metric(c: float = 1.0) -> Semimetric:
    """``c`` for every pair of distinct points; a non-admissible fixture."""

    def ev(x, y):
        return np.where(np.asarray(x) != np.asarray(y), c, 0.0)

    return Semimetric(ev, f"constant({c:g})", is_metric=True, bounded=True, diameter_hint=c)


# ---------------------------------------------------------------------------
# orbit combinators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IteratedMetric:
    """Average, sup or l^p combination of ``base`` along the first ``n`` iterates."""

    base: Semimetric
    system: SystemSpec
    n: int
    mode: str = "average"
    p: float = 2.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "lp" and not self.p > 1:
            raise ValueError("lp mode needs p > 1")

    @property
    def name(self) -> str:
        tag = f"lp{self.p:g}" if self.mode == "lp" else self.mode
        return f"{self.base.name}^{tag}_{self.n}"

    @property
    def diameter(self) -> float | None:
        return self.base.diameter

    @property
    def bounded(self) -> bool:
        return self.base.bounded

    def _combine(self, rows: np.ndarray) -> np.ndarray:
        if self.mode == "average":
            return rows.mean(axis=0)
        if self.mode == "sup":
            return rows.max(axis=0)
        if len(rows) == 1:  # keep n = 1 exactly equal to the base metric
            return rows[0]
        return np.mean(rows ** self.p, axis=0) ** (1.0 / self.p)

    def __call__(self, x, y) -> float:
        """Scalar evaluation on points (floats or BitWords)."""
        xs = orbit(self.system, x, self.n)
        ys = orbit(self.system, y, self.n)
        rows = np.array([self.base(a, b) for a, b in zip(xs, ys)])
        return float(self._combine(rows))

    def evaluate(self, X, Y) -> np.ndarray:
        """Elementwise evaluation on two equal-length arrays of sample points."""
        sx, _ = orbit_states(self.system, X, self.n)
        sy, _ = orbit_states(self.system, Y, self.n)
        return self._combine(self.base.evaluate(sx, sy))


def iterate(base: Semimetric, sys: SystemSpec, n: int, mode: str = "average", p: float = 2.0) -> IteratedMetric:
    return IteratedMetric(base, sys, int(n), mode, float(p))


def evaluate_pairs(rho, X, Y) -> np.ndarray:
    """Elementwise distances for Semimetric or IteratedMetric."""
    if isinstance(rho, IteratedMetric):
        return rho.evaluate(X, Y)
    return rho.evaluate(X, Y)


def iterated_pairwise(base: Semimetric, states: np.ndarray, schedule: Iterable[int],
                      modes: Sequence[str] = ("average",), p: float = 2.0, block: int = 512
                      ) -> Iterator[tuple[int, dict[str, np.ndarray]]]:
    """Pairwise iterated distance matrices for every ``n`` in ``schedule``.

    ``states`` is the ``(n_max, m)`` orbit array; one pass over it serves the
    whole schedule and all modes.  Yields ``(n, {mode: matrix})`` in order.
    Each yielded matrix is a fresh array owned by the caller.
    """
    schedule = sorted(set(int(n) for n in schedule))
    if not schedule or schedule[0] < 1:
        raise ValueError("schedule must contain positive integers")
    if schedule[-1] > len(states):
        raise ValueError("orbit shorter than the schedule")
    if base.labeler is not None:
        yield from _labeled_pairwise(base, states, schedule, modes, p, block)
        return
    if base.kernel is not None:
        yield from _kernel_pairwise(base, states, schedule, modes, p)
        return
    m = states.shape[1]
    total = np.zeros((m, m))
    top = np.zeros((m, m)) if "sup" in modes else None
    power = np.zeros((m, m)) if "lp" in modes else None
    k = 0
    for n in schedule:
        while k < n:
            d = base.pairwise(states[k])
            total += d
            if top is not None:
                np.maximum(top, d, out=top)
            if power is not None:
                power += d ** p
            k += 1
        out = {}
        for mode in modes:
            if mode == "average":
                out[mode] = total / n
            elif mode == "sup":
                out[mode] = top.copy()
            else:
                out[mode] = total.copy() if n == 1 else (power / n) ** (1.0 / p)
        yield n, out


def _kernel_pairwise(base, states, schedule, modes, p):
    from ._kernels import accumulate

    m = states.shape[1]
    total = np.zeros((m, m))
    top = np.zeros((m, m))
    power = np.zeros((m, m))
    do_sup, do_lp = "sup" in modes, "lp" in modes
    k = 0
    for n in schedule:
        accumulate(base.kernel, np.ascontiguousarray(states[k:n]), total, top, power, do_sup, do_lp, p)
        k = n
        out = {}
        for mode in modes:
            if mode == "average":
                out[mode] = base.scale * (total + total.T) / n
            elif mode == "sup":
                out[mode] = base.scale * (top + top.T)
            else:
                sym = (total + total.T) if n == 1 else ((power + power.T) / n) ** (1.0 / p)
                out[mode] = base.scale * sym
        yield n, out


def _labeled_pairwise(base, states, schedule, modes, p, block):
    m = states.shape[1]
    labels = np.asarray(base.labeler(states))
    n_cells = int(labels.max()) + 1
    matches = np.zeros((m, m))
    k = 0
    for n in schedule:
        while k < n:
            stop = min(n, k + block)
            lab = labels[k:stop]  # (b, m)
            onehot = np.zeros((m, (stop - k) * n_cells), dtype=np.float32)
            cols = lab.T + n_cells * np.arange(stop - k)[None, :]
            np.put_along_axis(onehot, cols, 1.0, axis=1)
            matches += onehot @ onehot.T
            k = stop
        mismatch = n - matches
        out = {}
        for mode in modes:
            if mode == "average":
                out[mode] = base.scale * mismatch / n
            elif mode == "sup":
                out[mode] = base.scale * (mismatch > 0.5)
            else:
                out[mode] = base.scale * (mismatch / n) ** (1.0 / p)
        yield n, out


def distance_matrix(rho, sample: EmpiricalSample) -> np.ndarray:
    """Full pairwise matrix of ``rho`` on a sample."""
    if isinstance(rho, IteratedMetric):
        states, _ = orbit_states(rho.system, sample.points, rho.n)
        _, out = next(iterated_pairwise(rho.base, states, [rho.n], [rho.mode], rho.p))
        return out[rho.mode]
    pts = sample.points
    if sample.system.kind == "bernoulli_shift":
        states, _ = orbit_states(sample.system, pts, 1)
        pts = states[0]
    return rho.pairwise(pts)


# ---------------------------------------------------------------------------
# circle closed forms
# ---------------------------------------------------------------------------


def rotation_average_closed_form(a: float, r) -> np.ndarray | float:
    """``m[A Δ (A + r)]`` for the arc ``A = [0, a)``."""
    r = np.abs(np.asarray(r, dtype=np.float64)) % 1.0
    d = np.minimum(r, 1.0 - r)
    out = 2.0 * (a - np.maximum(a - d, 0.0) - np.maximum(a + d - 1.0, 0.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GroupMetricProfile:
    """Profile ``phi(r) = rho(x, x + r)`` of a translation-invariant metric on the circle."""

    phi: Callable[[np.ndarray], np.ndarray]
    name: str = "phi"

    def __call__(self, r):
        return self.phi(np.asarray(r, dtype=np.float64) % 1.0)

    def check(self, grid_size: int = 200, tol: float = 1e-12) -> dict[str, float]:
        """Worst violations of phi(0)=0, phi(r)=phi(1-r) and subadditivity on a grid."""
        r = np.arange(grid_size) / grid_size
        v = self(r)
        sub = self((r[:, None] + r[None, :]) % 1.0) - v[:, None] - v[None, :]
        return {
            "zero": float(abs(self(0.0))),
            "symmetry": float(np.max(np.abs(v - self(1.0 - r)))),
            "subadditivity": float(max(np.max(sub), 0.0)),
            "ok": float(abs(self(0.0)) <= tol and np.max(np.abs(v - self(1.0 - r))) <= tol
                        and np.max(sub) <= tol),
        }

    def metric(self) -> Semimetric:
        def ev(x, y):
            return self(np.asarray(y, dtype=np.float64) - x)

        return Semimetric(ev, f"invariant({self.name})", is_metric=True, bounded=True,
                          diameter_hint=float(np.max(self(np.linspace(0, 1, 1001)))), domain="circle")


def rotation_average_profile(a: float) -> GroupMetricProfile:
    return GroupMetricProfile(lambda r: rotation_average_closed_form(a, r), f"arc[0,{a:g})")


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------


@dataclass
class ViolationReport:
    trials: int
    symmetry: int = 0
    nonnegativity: int = 0
    reflexivity: int = 0
    triangle: int = 0
    worst_triangle: float = 0.0
    witnesses: list = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.symmetry + self.nonnegativity + self.reflexivity + self.triangle

    @property
    def ok(self) -> bool:
        return self.total == 0


def _sample_states(sample: EmpiricalSample, idx):
    """Points as base-metric states (shift buffers collapse to their visible word)."""
    pts = sample.points[idx]
    if sample.system.kind == "bernoulli_shift":
        return orbit_states(sample.system, pts, 1)[0][0]
    return pts


def metric_axiom_check(rho, sample: EmpiricalSample, trials: int, seed: int = 0,
                       tol: float = TRIANGLE_TOL) -> ViolationReport:
    """Symmetry, nonnegativity, reflexivity and triangle checks on random triples."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    i, j, k = rng.integers(0, sample.m, size=(3, trials))
    if isinstance(rho, IteratedMetric):
        pts = sample.points
        ev = rho.evaluate
    else:
        pts = _sample_states(sample, np.arange(sample.m))
        ev = rho.evaluate
    x, y, z = pts[i], pts[j], pts[k]
    dxy, dyx, dyz, dxz, dxx = ev(x, y), ev(y, x), ev(y, z), ev(x, z), ev(x, x)
    rep = ViolationReport(trials)
    sym = np.abs(dxy - dyx) > tol
    neg = (dxy < -tol) | (dyz < -tol) | (dxz < -tol)
    refl = np.abs(dxx) > tol
    excess = dxz - dxy - dyz
    tri = excess > tol
    rep.symmetry, rep.nonnegativity = int(sym.sum()), int(neg.sum())
    rep.reflexivity, rep.triangle = int(refl.sum()), int(tri.sum())
    rep.worst_triangle = float(max(excess.max(), 0.0))
    bad = np.flatnonzero(sym | neg | refl | tri)[:5]
    rep.witnesses = [(int(i[b]), int(j[b]), int(k[b])) for b in bad]
    return rep


@dataclass
class AdmissibilityRow:
    eps: float
    fraction: float  # points whose eps-ball holds another sample point
    min_ball_mass: float


def admissibility_probe(rho, sample: EmpiricalSample, eps_list: Sequence[float]) -> list[AdmissibilityRow]:
    """Empirical version of the positive-ball-mass condition."""
    if sample.m < 100:
        raise ValueError("admissibility probe needs at least 100 sample points")
    d = distance_matrix(rho, sample)
    rows = []
    for eps in eps_list:
        inside = d <= eps
        mass = inside.sum(axis=1) / sample.m
        np.fill_diagonal(inside, False)
        rows.append(AdmissibilityRow(float(eps), float(inside.any(axis=1).mean()), float(mass.min())))
    return rows


@dataclass
class SemicontinuityProfile:
    r: np.ndarray
    phi: np.ndarray
    inf_small: float  # inf of phi over 0 < r <= small


def semicontinuity_probe(rho: Semimetric, r_grid: Sequence[float], samples: int = 100_000,
                         seed: int = 0, small: float = 0.1) -> SemicontinuityProfile:
    """Monte-Carlo estimate of ``phi(r) = ∫ rho(z, z + r) dm(z)`` on the circle."""
    if rho.domain == "word":
        raise ValueError("semicontinuity probe needs a circle metric")
    r = np.asarray(r_grid, dtype=np.float64)
    z = np.random.default_rng(seed).random(samples)
    phi = np.array([0.0 if ri == 0 else float(rho.evaluate(z, (z + ri) % 1.0).mean()) for ri in r])
    close = (r > 0) & (np.minimum(r, 1 - r) <= small)
    inf_small = float(phi[close].min()) if close.any() else float("nan")
    return SemicontinuityProfile(r, phi, inf_small)


@dataclass
class LipschitzReport:
    max_ratio: float
    quantiles: dict[float, float]
    pairs_used: int


def lipschitz_probe(rho: Semimetric, sys: SystemSpec, sample: EmpiricalSample, pairs: int,
                    seed: int = 0) -> LipschitzReport:
    """Empirical ``max rho(Tx, Ty) / rho(x, y)`` over random pairs (zero distances skipped)."""
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    if sys.kind == "bernoulli_shift" and sample.horizon < 1:
        raise ValueError("shift sample needs horizon >= 1 for a Lipschitz probe")
    rng = np.random.default_rng(seed)
    i = rng.integers(0, sample.m, pairs)
    j = (i + rng.integers(1, sample.m, pairs)) % sample.m
    sx, ofx = orbit_states(sys, sample.points[i], 2)
    sy, ofy = orbit_states(sys, sample.points[j], 2)
    before = rho.evaluate(sx[0], sy[0])
    after = rho.evaluate(sx[1], sy[1])
    keep = (before > 0) & ~ofx & ~ofy
    ratio = after[keep] / before[keep]
    if ratio.size == 0:
        return LipschitzReport(float("nan"), {}, 0)
    qs = (0.5, 0.9, 0.99, 1.0)
    return LipschitzReport(float(ratio.max()), {q: float(np.quantile(ratio, q)) for q in qs}, int(ratio.size))
