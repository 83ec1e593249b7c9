"""Scaling curves of iterated metrics, growth classification and spectrum verdicts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .entropy import cover_target, greedy_net
from .metrics import MODES, Semimetric, iterated_pairwise
from .systems import DomainOverflow, SystemSpec, sample_orbits

DEFAULT_SCHEDULE = tuple(2 ** i for i in range(13))
DEFAULT_EPS_GRID = (0.05, 0.1, 0.2)
DEFAULT_M = 2000


@dataclass
class ScalingCurve:
    schedule: list[int]
    eps_grid: list[float]
    mode: str
    values: dict[tuple[int, float], float]  # (n, eps) -> ln k
    counts: dict[tuple[int, float], int]  # (n, eps) -> k
    provenance: dict[str, Any] = field(default_factory=dict)
    gaps: list[tuple[int, float]] = field(default_factory=list)

    def series(self, eps: float) -> tuple[np.ndarray, np.ndarray]:
        """(n, ln_k) for the cells present at this eps."""
        ns = [n for n in self.schedule if (n, eps) in self.values]
        return np.array(ns, dtype=np.float64), np.array([self.values[n, eps] for n in ns])

    def ceiling(self, eps: float) -> float:
        """ln of the largest k a net on this sample can need."""
        return math.log(cover_target(self.provenance["m"], eps))

    def rows(self) -> list[dict[str, Any]]:
        out = []
        for n in self.schedule:
            for eps in self.eps_grid:
                if (n, eps) in self.values:
                    out.append({
                        "system": self.provenance.get("system", ""),
                        "metric": self.provenance.get("metric", ""),
                        "mode": self.mode,
                        "n": n,
                        "epsilon": eps,
                        "k": self.counts[n, eps],
                        "ln_k": self.values[n, eps],
                        "m": self.provenance.get("m"),
                        "seed": self.provenance.get("seed"),
                    })
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "schedule": list(self.schedule),
            "eps_grid": list(self.eps_grid),
            "mode": self.mode,
            "cells": [{"n": n, "epsilon": e, "k": self.counts[n, e], "ln_k": self.values[n, e]}
                      for (n, e) in sorted(self.values)],
            "provenance": dict(self.provenance),
            "gaps": [list(g) for g in self.gaps],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ScalingCurve:
        values = {(c["n"], c["epsilon"]): c["ln_k"] for c in d["cells"]}
        counts = {(c["n"], c["epsilon"]): c["k"] for c in d["cells"]}
        return cls(list(d["schedule"]), list(d["eps_grid"]), d["mode"], values, counts,
                   dict(d.get("provenance", {})), [tuple(g) for g in d.get("gaps", [])])


def scaling_curves(sys: SystemSpec, metric: Semimetric, modes: Sequence[str] = ("average",),
                   schedule: Sequence[int] = DEFAULT_SCHEDULE, eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
                   m: int = DEFAULT_M, seed: int = 0, p: float = 2.0, strategy: str = "greedy",
                   max_resamples: int = 8) -> dict[str, ScalingCurve]:
    """Scaling curves for several modes from a single sample and orbit pass.

    The sample is drawn once from ``seed`` and shared by every ``n`` and mode.
    """
    schedule = [int(n) for n in schedule]
    if any(b <= a for a, b in zip(schedule, schedule[1:])) or schedule[0] < 1:
        raise ValueError("schedule must be strictly increasing positive integers")
    for mode in modes:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
    eps_grid = [float(e) for e in eps_grid]
    provenance = {"system": sys.name, "metric": metric.name, "m": int(m), "seed": int(seed),
                  "strategy": strategy}
    if "lp" in modes:
        provenance["p"] = p
    curves = {mode: ScalingCurve(schedule, eps_grid, mode, {}, {}, dict(provenance)) for mode in modes}
    try:
        sample, states = sample_orbits(sys, m, seed, schedule[-1], max_resamples=max_resamples)
    except DomainOverflow:
        for c in curves.values():
            c.gaps = [(n, e) for n in schedule for e in eps_grid]
        return curves
    for c in curves.values():
        c.provenance["resampled_points"] = int((sample.attempts > 0).sum())
    for n, mats in iterated_pairwise(metric, states, schedule, modes, p):
        for mode, D in mats.items():
            for eps in eps_grid:
                net = greedy_net(D, eps, strategy)
                curves[mode].values[n, eps] = net.ln_k
                curves[mode].counts[n, eps] = net.k
    return curves


def scaling_curve(sys: SystemSpec, metric: Semimetric, mode: str = "average",
                  schedule: Sequence[int] = DEFAULT_SCHEDULE, eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
                  m: int = DEFAULT_M, seed: int = 0, **kw) -> ScalingCurve:
    return scaling_curves(sys, metric, (mode,), schedule, eps_grid, m, seed, **kw)[mode]


# ---------------------------------------------------------------------------
# growth classification
# ---------------------------------------------------------------------------

POWER_ALPHAS = (0.25, 0.5, 0.75)
MIN_POINTS = 6
BOUNDED_RISE = 0.3  # nats; a tunable, not a truth claim
DOMINANCE_MARGIN = 2.0  # BIC units
NOISE_FLOOR = 0.02  # nats; residual scale below which fits count as exact
BURN_IN = 1.0 / 3.0  # leading fraction of the schedule ignored by the bounded test
UNBOUNDED = ("logarithmic", "power", "linear")


class TooFewPoints(ValueError):
    pass


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class _Model:
    label: str
    cls: str
    alpha: float | None = None

    def basis(self, n: np.ndarray) -> np.ndarray | None:
        if self.cls == "bounded":
            return None
        if self.cls == "logarithmic":
            return np.log(n)
        if self.cls == "linear":
            return n
        return n ** self.alpha


MODELS = (
    _Model("constant", "bounded"),
    _Model("log", "logarithmic"),
    *(_Model(f"power({a:g})", "power", a) for a in POWER_ALPHAS),
    _Model("linear", "linear"),
)


@dataclass
class ModelFit:
    model: str
    a: float
    b: float
    rss: float  # censored cells contribute only when the fit falls below them
    r2: float  # on the uncensored cells
    bic: float
    rise: float  # fitted increase across the fitted range

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class GrowthVerdict:
    cls: str  # bounded | logarithmic | power | linear | inconclusive
    alpha: float | None
    per_eps: dict[float, str]
    fits: dict[float, dict[str, ModelFit]]
    thirds: dict[float, float]  # last-third minus first-third mean, full schedule
    window_thirds: dict[float, float]  # same, after the burn-in
    censored: dict[float, int]  # first censored schedule index (len if none)
    mode: str = "average"
    provenance: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def label(self) -> str:
        return f"power({self.alpha:g})" if self.cls == "power" and self.alpha is not None else self.cls

    @property
    def unbounded(self) -> bool:
        return self.cls in UNBOUNDED

    def selected(self, eps: float) -> ModelFit | None:
        """Fit of the model behind the per-eps class."""
        key = {"bounded": "constant", "logarithmic": "log", "linear": "linear"}.get(self.per_eps[eps].split("(")[0],
                                                                                  self.per_eps[eps])
        return self.fits[eps].get(key)

    def to_dict(self) -> dict[str, Any]:
        return {
            "class": self.cls,
            "label": self.label,
            "alpha": self.alpha,
            "mode": self.mode,
            "provenance": dict(self.provenance),
            "per_eps": {str(e): c for e, c in self.per_eps.items()},
            "thirds": {str(e): v for e, v in self.thirds.items()},
            "window_thirds": {str(e): v for e, v in self.window_thirds.items()},
            "censored": {str(e): v for e, v in self.censored.items()},
            "fits": {str(e): {k: f.to_dict() for k, f in fs.items()} for e, fs in self.fits.items()},
            "notes": list(self.notes),
        }


def thirds_rise(y: np.ndarray) -> float:
    """Mean of the last third minus mean of the first third."""
    t = max(len(y) // 3, 1)
    return float(np.mean(y[-t:]) - np.mean(y[:t]))


def _fit(model: _Model, n: np.ndarray, y: np.ndarray, cut: int) -> ModelFit:
    """Least squares on cells ``[:cut]``; cells from ``cut`` on are lower bounds.

    Growth slopes are constrained to ``b >= 0``.  The censored objective (a
    one-sided hinge on the lower bounds) is convex, so a bounded
    least-squares solve finds its global minimum.
    """
    from scipy.optimize import least_squares

    x = model.basis(n)
    N = len(y)
    if x is None:
        if cut == N:
            a = float(np.mean(y))
        else:
            a = float(least_squares(lambda t: np.concatenate([y[:cut] - t[0], np.maximum(y[cut:] - t[0], 0.0)]),
                                    [float(np.mean(y))]).x[0])
        b = 0.0
        f = np.full(N, a)
    else:
        xu, yu = x[:cut], y[:cut]
        if cut >= 2 and np.ptp(xu) > 0:
            b0, a0 = np.polyfit(xu, yu, 1)
        else:
            b0, a0 = 0.0, float(np.mean(y))
        b0 = max(float(b0), 0.0)

        def resid(t):
            f = t[0] + t[1] * x
            return np.concatenate([yu - f[:cut], np.maximum(y[cut:] - f[cut:], 0.0)])

        if cut == N and b0 > 0:
            a, b = float(a0), b0
        else:
            sol = least_squares(resid, [a0, b0], bounds=([-np.inf, 0.0], [np.inf, np.inf]))
            a, b = (float(v) for v in sol.x)
        f = a + b * x
    r = np.concatenate([y[:cut] - f[:cut], np.maximum(y[cut:] - f[cut:], 0.0)])
    rss = float(r @ r)
    rss_u = float(np.sum((y[:cut] - f[:cut]) ** 2))
    tss_u = float(np.sum((y[:cut] - np.mean(y[:cut])) ** 2)) if cut else 0.0
    if tss_u > 0:
        r2 = 1.0 - rss_u / tss_u
    else:
        r2 = 1.0 if rss_u <= NOISE_FLOOR ** 2 * max(cut, 1) else 0.0
    k = 1 if x is None else 2
    bic = N * math.log(max(rss, N * NOISE_FLOOR ** 2) / N) + k * math.log(N)
    return ModelFit(model.label, a, b, rss, r2, bic, float(f[-1] - f[0]))


def _dominant(fits: dict[str, ModelFit], allowed: Sequence[_Model], margin: float) -> _Model | None:
    """Best class by BIC, provided it beats every other class by ``margin``."""
    best: dict[str, tuple[float, _Model]] = {}
    for mdl in allowed:
        b = fits[mdl.label].bic
        if mdl.cls not in best or b < best[mdl.cls][0]:
            best[mdl.cls] = (b, mdl)
    ranked = sorted(best.values(), key=lambda t: t[0])
    if len(ranked) > 1 and ranked[1][0] - ranked[0][0] < margin:
        return None
    return ranked[0][1]


def _classify_eps(n: np.ndarray, y: np.ndarray, ceiling: float | None, margin: float, rise_tol: float,
                  burn_in: float) -> tuple[str, float | None, dict[str, ModelFit], float, int, list[str]]:
    notes: list[str] = []
    N = len(y)
    cut = N
    if ceiling is not None:
        hit = np.nonzero(y >= ceiling - math.log(2.0))[0]
        if hit.size:
            cut = int(hit[0])
    if cut < 2:
        notes.append("too few cells below the sample ceiling")
    fits = {mdl.label: _fit(mdl, n, y, cut) for mdl in MODELS}

    # bounded test: post-burn-in window, uncensored only
    start = int(math.floor(burn_in * N))
    wn, wy = n[start:], y[start:]
    w_rise = thirds_rise(wy)
    if cut == N and len(wy) >= 3 and w_rise < rise_tol:
        wfits = {mdl.label: _fit(mdl, wn, wy, len(wy)) for mdl in MODELS}
        material = [mdl for mdl in MODELS if mdl.cls == "bounded" or wfits[mdl.label].rise >= rise_tol]
        if _dominant(wfits, material, margin) is MODELS[0]:
            return "bounded", None, fits, w_rise, cut, notes

    if cut < 2:
        return "inconclusive", None, fits, w_rise, cut, notes
    growth = [mdl for mdl in MODELS[1:] if fits[mdl.label].rise >= rise_tol]
    if not growth:
        notes.append("no material growth model and the bounded test failed")
        return "inconclusive", None, fits, w_rise, cut, notes
    win = _dominant(fits, [MODELS[0], *growth], margin)
    if win is None or win.cls == "bounded":
        return "inconclusive", None, fits, w_rise, cut, notes
    return win.cls, win.alpha, fits, w_rise, cut, notes


def classify_growth(curve: ScalingCurve, margin: float = DOMINANCE_MARGIN, rise_tol: float = BOUNDED_RISE,
                    burn_in: float = BURN_IN) -> GrowthVerdict:
    """Growth class of ``ln k(n)`` shared by every eps of the curve.

    Cells within ``ln 2`` of the sample ceiling (from the first such cell on)
    are treated as lower bounds.  ``bounded`` needs an uncensored curve whose
    post-burn-in window rises by less than ``rise_tol`` between its outer
    thirds, with the constant model dominating every material growth model.
    A growth model is material when its fitted rise reaches ``rise_tol``.
    Classes that disagree across eps give ``inconclusive``.
    """
    per_eps: dict[float, str] = {}
    per_cls: dict[float, tuple[str, float | None]] = {}
    fits, thirds, wthirds, censored = {}, {}, {}, {}
    notes: list[str] = []
    m = curve.provenance.get("m")
    for eps in curve.eps_grid:
        n, y = curve.series(eps)
        if len(n) < MIN_POINTS:
            raise TooFewPoints(f"eps={eps:g}: {len(n)} schedule points, need {MIN_POINTS}")
        ceiling = curve.ceiling(eps) if m else None
        cls, alpha, f, w_rise, cut, nts = _classify_eps(n, y, ceiling, margin, rise_tol, burn_in)
        per_cls[eps] = (cls, alpha)
        per_eps[eps] = f"power({alpha:g})" if cls == "power" else cls
        fits[eps], thirds[eps], wthirds[eps], censored[eps] = f, thirds_rise(y), w_rise, cut
        notes.extend(f"eps={eps:g}: {s}" for s in nts)
    classes = {c for c, _ in per_cls.values()}
    if len(classes) == 1:
        cls = classes.pop()
        alphas = sorted({a for _, a in per_cls.values() if a is not None})
        alpha = alphas[len(alphas) // 2] if alphas else None
        if len(alphas) > 1:
            notes.append(f"power exponents differ across eps: {alphas}")
    else:
        cls, alpha = "inconclusive", None
        notes.append("classes disagree across eps: " + ", ".join(f"{e:g}->{c}" for e, c in per_eps.items()))
    return GrowthVerdict(cls, alpha, per_eps, fits, thirds, wthirds, censored, curve.mode,
                         dict(curve.provenance), notes)


@dataclass
class SpectrumVerdict:
    verdict: str  # discrete | continuous_component | inconclusive
    message: str
    used: int
    excluded: int

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def spectrum_diagnostic(verdicts: Sequence[GrowthVerdict]) -> SpectrumVerdict:
    """Spectral reading of average-mode growth verdicts.

    Sup-mode verdicts are ignored: sup growth occurs for discrete-spectrum
    systems too.  The verdicts are empirical and never claim a proof.
    """
    verdicts = list(verdicts)
    if not verdicts:
        raise EmptyInput("no verdicts supplied")
    used = [v for v in verdicts if v.mode != "sup"]
    excluded = len(verdicts) - len(used)
    if not used:
        return SpectrumVerdict("inconclusive", "inconclusive: only sup-mode curves were supplied, and sup-mode "
                               "growth does not witness a continuous spectral component", 0, excluded)
    if any(v.unbounded for v in used):
        names = ", ".join(sorted({v.provenance.get("metric", "?") for v in used if v.unbounded}))
        return SpectrumVerdict("continuous_component", "consistent with a continuous spectral component "
                               f"(unbounded average-mode scaling for {names})", len(used), excluded)
    if all(v.cls == "bounded" for v in used):
        return SpectrumVerdict("discrete", "consistent with purely discrete spectrum (bounded average-mode "
                               "scaling for every tested metric)", len(used), excluded)
    return SpectrumVerdict("inconclusive", "inconclusive: some average-mode curves could not be classified",
                           len(used), excluded)
