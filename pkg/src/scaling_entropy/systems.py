"""Measure-preserving systems and samplers for their invariant measures.

Three systems are supported:

* ``rotation``: ``x -> x + alpha (mod 1)`` on the circle with Lebesgue measure.
* ``bernoulli_shift``: the one-sided shift on {0,1}^N with a Bernoulli(p)
  product measure.  Points carry a pre-sampled tail buffer so that iterating
  never invents symbols.
* ``pascal``: the Pascal adic transformation on {0,1}^N with a Bernoulli(p)
  measure, acting by the prefix rewrite ``1^i 0^j 1 -> 0^(j-1) 1^(i+1) 0``.

Scalar helpers (``rotation_step``, ``shift_step``, ``pascal_step``, ``orbit``)
work on single points.  The vectorized path (``orbit_states``,
``sample_orbits``) packs binary words into ``uint64`` with the first symbol in
the least significant bit, which limits it to depth <= 64.

Seeding: point ``i`` of a sample drawn with root seed ``s`` uses its own stream
``SeedSequence(s, spawn_key=(i, attempt))``; ``attempt`` starts at 0 and is
bumped only when that point has to be redrawn.  A sample of size ``m`` is
therefore a prefix of the sample of size ``2m`` with the same seed, and the
order in which points are generated does not matter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

DEFAULT_ALPHA = 0.6180339887498949
DEFAULT_DEPTH = 64
PACKED_MAX_DEPTH = 64

SYSTEM_KINDS = ("rotation", "bernoulli_shift", "pascal")


class DomainOverflow(ValueError):
    """The Pascal rewrite does not resolve inside the truncated word."""


class BufferExhausted(ValueError):
    """A shift point ran out of pre-sampled tail symbols."""


# ---------------------------------------------------------------------------
# points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BitWord:
    """A binary word of fixed length, optionally with a tail buffer.

    ``bits`` is the visible word (the first ``N`` coordinates).  ``tail``
    holds future symbols consumed by the shift, one per step.
    """

    bits: tuple[int, ...]
    tail: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.bits) < 1:
            raise ValueError("BitWord needs at least one symbol")
        if any(b not in (0, 1) for b in self.bits + self.tail):
            raise ValueError("BitWord symbols must be 0 or 1")

    @classmethod
    def from_string(cls, s: str, tail: str = "") -> BitWord:
        return cls(tuple(int(c) for c in s), tuple(int(c) for c in tail))

    @classmethod
    def from_packed(cls, value: int, depth: int) -> BitWord:
        value = int(value)
        return cls(tuple((value >> i) & 1 for i in range(depth)))

    @property
    def N(self) -> int:
        return len(self.bits)

    def packed(self) -> int:
        """First symbol in bit 0."""
        out = 0
        for i, b in enumerate(self.bits):
            out |= b << i
        return out

    def __str__(self) -> str:
        s = "".join(map(str, self.bits))
        if self.tail:
            s += "|" + "".join(map(str, self.tail))
        return s


@dataclass(frozen=True)
class SystemSpec:
    kind: str
    alpha: float | None = None
    p: float | None = None
    depth: int = DEFAULT_DEPTH
    name: str = ""
    rational: bool = False

    def __post_init__(self):
        if self.kind not in SYSTEM_KINDS:
            raise ValueError(f"unknown system kind {self.kind!r}")
        if self.kind == "rotation":
            if self.alpha is None or not 0.0 <= self.alpha < 1.0:
                raise ValueError("rotation needs 0 <= alpha < 1")
        else:
            if self.p is None or not 0.0 < self.p < 1.0:
                raise ValueError("p must lie in (0, 1)")
            if int(self.depth) < 1:
                raise ValueError("depth must be >= 1")
        if not self.name:
            object.__setattr__(self, "name", self._default_name())

    def _default_name(self) -> str:
        if self.kind == "rotation":
            return f"rotation(alpha={self.alpha:.6g})"
        return f"{self.kind}(p={self.p:.6g},N={self.depth})"

    @classmethod
    def rotation(cls, alpha: float = DEFAULT_ALPHA, rational: bool = False, name: str = "") -> SystemSpec:
        return cls("rotation", alpha=float(alpha), rational=rational, name=name)

    @classmethod
    def bernoulli_shift(cls, p: float = 0.5, depth: int = DEFAULT_DEPTH, name: str = "") -> SystemSpec:
        return cls("bernoulli_shift", p=float(p), depth=int(depth), name=name)

    @classmethod
    def pascal(cls, p: float = 0.5, depth: int = DEFAULT_DEPTH, name: str = "") -> SystemSpec:
        return cls("pascal", p=float(p), depth=int(depth), name=name)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SystemSpec:
        d = dict(d)
        kind = d.pop("kind", None)
        allowed = {"rotation": {"alpha", "rational", "name"},
                   "bernoulli_shift": {"p", "depth", "name"},
                   "pascal": {"p", "depth", "name"}}
        if kind not in allowed:
            raise ValueError(f"unknown system kind {kind!r}")
        extra = set(d) - allowed[kind]
        if extra:
            raise ValueError(f"unknown keys for {kind}: {sorted(extra)}")
        return getattr(cls, kind)(**d)

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "rotation":
            return {"kind": self.kind, "alpha": self.alpha, "rational": self.rational, "name": self.name}
        return {"kind": self.kind, "p": self.p, "depth": self.depth, "name": self.name}

    @property
    def symbolic(self) -> bool:
        return self.kind != "rotation"


# ---------------------------------------------------------------------------
# scalar maps
# ---------------------------------------------------------------------------


def rotation_step(x: float, alpha: float) -> float:
    return (x + alpha) % 1.0


def shift_step(w: BitWord) -> BitWord:
    if not w.tail:
        raise BufferExhausted(f"no tail symbols left after {w}")
    return BitWord(w.bits[1:] + w.tail[:1], w.tail[1:])


def _pascal_parse(bits: Sequence[int]) -> tuple[int, int]:
    n = len(bits)
    i = 0
    while i < n and bits[i] == 1:
        i += 1
    j = 0
    while i + j < n and bits[i + j] == 0:
        j += 1
    if j == 0 or i + j >= n:
        raise DomainOverflow(f"pattern 1^i 0^j 1 does not resolve in {''.join(map(str, bits))}")
    return i, j


def pascal_step(w: BitWord) -> BitWord:
    """Rewrite the prefix ``1^i 0^j 1`` as ``0^(j-1) 1^(i+1) 0``."""
    i, j = _pascal_parse(w.bits)
    prefix = (0,) * (j - 1) + (1,) * (i + 1) + (0,)
    return BitWord(prefix + w.bits[i + j + 1:], w.tail)


def pascal_step_inverse(w: BitWord) -> BitWord:
    """Rewrite the prefix ``0^a 1^b 0`` (b >= 1) as ``1^(b-1) 0^(a+1) 1``."""
    bits = w.bits
    n = len(bits)
    a = 0
    while a < n and bits[a] == 0:
        a += 1
    b = 0
    while a + b < n and bits[a + b] == 1:
        b += 1
    if b == 0 or a + b >= n:
        raise DomainOverflow(f"inverse pattern does not resolve in {w}")
    prefix = (1,) * (b - 1) + (0,) * (a + 1) + (1,)
    return BitWord(prefix + bits[a + b + 1:], w.tail)


def step(sys: SystemSpec, x):
    if sys.kind == "rotation":
        return rotation_step(x, sys.alpha)
    if sys.kind == "bernoulli_shift":
        return shift_step(x)
    return pascal_step(x)


def orbit(sys: SystemSpec, x, n: int) -> list:
    """Return ``[x, Tx, ..., T^(n-1) x]``."""
    if n < 1:
        raise ValueError("orbit length must be >= 1")
    out = [x]
    for _ in range(n - 1):
        x = step(sys, x)
        out.append(x)
    return out


# ---------------------------------------------------------------------------
# packed word arithmetic
# ---------------------------------------------------------------------------

_ONE = np.uint64(1)


def depth_mask(depth: int) -> np.uint64:
    if depth >= 64:
        return np.uint64(0xFFFFFFFFFFFFFFFF)
    return np.uint64((1 << depth) - 1)


def trailing_zeros(v: np.ndarray) -> np.ndarray:
    """Index of the lowest set bit; -1 where ``v == 0``."""
    v = np.asarray(v, dtype=np.uint64)
    with np.errstate(over="ignore"):  # two's-complement wrap is intended
        low = v & (~v + _ONE)
    # powers of two convert to float64 exactly
    return np.frexp(low.astype(np.float64))[1].astype(np.int64) - 1


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack an ``(m, N)`` 0/1 array (N <= 64) into uint64, column 0 -> bit 0."""
    bits = np.asarray(bits, dtype=np.uint64)
    if bits.shape[-1] > PACKED_MAX_DEPTH:
        raise ValueError("packed words hold at most 64 symbols")
    shifts = np.arange(bits.shape[-1], dtype=np.uint64)
    return np.bitwise_or.reduce(bits << shifts, axis=-1)


def _shl(value: np.ndarray, count: np.ndarray) -> np.ndarray:
    count = np.asarray(count, dtype=np.int64)
    safe = np.minimum(count, 63).astype(np.uint64)
    return np.where(count >= 64, np.uint64(0), value << safe)


def _shr(value: np.ndarray, count: np.ndarray) -> np.ndarray:
    count = np.asarray(count, dtype=np.int64)
    safe = np.minimum(count, 63).astype(np.uint64)
    return np.where(count >= 64, np.uint64(0), value >> safe)


def pascal_step_packed(words: np.ndarray, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Pascal step on packed words.

    Returns ``(new_words, overflow)``; entries flagged in ``overflow`` are left
    unchanged.
    """
    words = np.asarray(words, dtype=np.uint64)
    mask = depth_mask(depth)
    ones = trailing_zeros(~words & mask)  # leading run of 1s
    ones = np.where(ones < 0, depth, ones)
    rest = _shr(words, ones)
    zeros = trailing_zeros(rest)  # j; bit after the zero run is the 1
    overflow = (ones >= depth) | (zeros <= 0)
    i = np.where(overflow, 0, ones)
    j = np.where(overflow, 1, zeros)
    length = i + j + 1
    prefix = _shl(_shl(np.ones_like(words), i + 1) - _ONE, j - 1)
    suffix = _shl(_shr(words, length), length)
    new = (suffix | prefix) & mask
    return np.where(overflow, words, new), overflow


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def point_rng(seed: int, index: int, attempt: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index), int(attempt))))


@dataclass
class EmpiricalSample:
    """i.i.d. points from the invariant measure, with uniform weights.

    ``points`` layout by system kind: rotation -> float64 ``(m,)``; pascal ->
    uint64 ``(m,)`` packed words; bernoulli_shift -> uint8 ``(m, N + horizon)``
    bit buffers (the first ``N`` columns are the visible word).
    """

    points: np.ndarray
    seed: int
    system: SystemSpec
    horizon: int = 0
    metric: str = ""
    attempts: np.ndarray | None = None
    weights: np.ndarray = field(init=False)

    def __post_init__(self):
        m = len(self.points)
        if m < 2:
            raise ValueError("a sample needs at least two points")
        self.weights = np.full(m, 1.0 / m)
        if self.attempts is None:
            self.attempts = np.zeros(m, dtype=np.int64)

    @property
    def m(self) -> int:
        return len(self.points)

    def point(self, i: int):
        """Point ``i`` as a scalar object (float or BitWord)."""
        sys = self.system
        if sys.kind == "rotation":
            return float(self.points[i])
        if sys.kind == "pascal":
            return BitWord.from_packed(int(self.points[i]), sys.depth)
        row = tuple(int(b) for b in self.points[i])
        return BitWord(row[: sys.depth], row[sys.depth:])

    def subset(self, idx) -> EmpiricalSample:
        idx = np.asarray(idx)
        return EmpiricalSample(self.points[idx], self.seed, self.system, self.horizon, self.metric,
                               self.attempts[idx])


def _draw_point(sys: SystemSpec, seed: int, i: int, attempt: int, horizon: int):
    rng = point_rng(seed, i, attempt)
    if sys.kind == "rotation":
        return rng.random()
    n_bits = sys.depth + (horizon if sys.kind == "bernoulli_shift" else 0)
    return (rng.random(n_bits) < sys.p).astype(np.uint8)


def sample_invariant(sys: SystemSpec, m: int, seed: int, horizon: int = 0) -> EmpiricalSample:
    """Draw ``m`` i.i.d. points from the invariant measure of ``sys``.

    ``horizon`` is the number of shift steps the sample must support; it sets
    the tail buffer length for ``bernoulli_shift`` and is ignored otherwise.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    raw = [_draw_point(sys, seed, i, 0, horizon) for i in range(m)]
    if sys.kind == "rotation":
        points = np.array(raw, dtype=np.float64)
    elif sys.kind == "pascal":
        if sys.depth > PACKED_MAX_DEPTH:
            raise ValueError("pascal samples support depth <= 64")
        points = pack_bits(np.stack(raw))
    else:
        points = np.stack(raw)
    return EmpiricalSample(points, int(seed), sys, int(horizon))


def orbit_states(sys: SystemSpec, points: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized orbits.

    Returns ``(states, overflow)`` where ``states[k]`` is ``T^k`` of every point
    (float64 on the circle, packed uint64 words otherwise) and ``overflow``
    flags points whose orbit left the truncated domain.
    """
    if n < 1:
        raise ValueError("orbit length must be >= 1")
    m = len(points)
    bad = np.zeros(m, dtype=bool)
    if sys.kind == "rotation":
        states = np.empty((n, m), dtype=np.float64)
        x = np.asarray(points, dtype=np.float64)
        for k in range(n):
            states[k] = x
            x = (x + sys.alpha) % 1.0
        return states, bad
    N = sys.depth
    if N > PACKED_MAX_DEPTH:
        raise ValueError("vectorized orbits support depth <= 64")
    states = np.empty((n, m), dtype=np.uint64)
    if sys.kind == "pascal":
        w = np.asarray(points, dtype=np.uint64)
        for k in range(n):
            states[k] = w
            if k < n - 1:
                w, of = pascal_step_packed(w, N)
                bad |= of
        return states, bad
    buf = np.asarray(points)
    if buf.shape[1] < N + n - 1:
        raise BufferExhausted(f"buffer of {buf.shape[1]} symbols cannot support {n - 1} steps at depth {N}")
    w = pack_bits(buf[:, :N])
    top = np.uint64(N - 1)
    for k in range(n):
        states[k] = w
        if k < n - 1:
            w = (w >> _ONE) | (buf[:, N + k].astype(np.uint64) << top)
    return states, bad


def sample_orbits(sys: SystemSpec, m: int, seed: int, n: int, max_resamples: int = 8):
    """Sample ``m`` points and their length-``n`` orbits.

    Points whose orbit overflows the truncation depth are redrawn from their
    next stream attempt, at most ``max_resamples`` times each.
    Returns ``(sample, states)``.
    """
    sample = sample_invariant(sys, m, seed, horizon=n - 1)
    states, bad = orbit_states(sys, sample.points, n)
    attempts = sample.attempts
    while bad.any():
        idx = np.flatnonzero(bad)
        if attempts[idx].max() >= max_resamples:
            raise DomainOverflow(f"{len(idx)} points still overflow after {max_resamples} resamples")
        attempts[idx] += 1
        for i in idx:
            raw = _draw_point(sys, seed, i, attempts[i], n - 1)
            sample.points[i] = pack_bits(raw[None, :])[0] if sys.kind == "pascal" else raw
        sub, sub_bad = orbit_states(sys, sample.points[idx], n)
        states[:, idx] = sub
        bad = np.zeros(m, dtype=bool)
        bad[idx] = sub_bad
    return sample, states
