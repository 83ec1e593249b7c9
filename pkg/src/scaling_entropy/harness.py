"""Experiment orchestration and the ``scaling-entropy`` command line."""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .config import METRIC_HELP, METRIC_KINDS, ConfigError, ExperimentConfig, build_metric, bundled_configs, \
    load_config, resolve_config
from .entropy import greedy_net, minimal_cover_bruteforce
from .metrics import (Arc, Cylinder, IteratedMetric, Semimetric, arc_metric, cut_semimetric,
                      distance_matrix, dyadic_metric, hamming_window_metric, indicator_semimetric,
                      metric_axiom_check)
from .scaling import ScalingCurve, classify_growth, scaling_curves, spectrum_diagnostic
from .systems import SYSTEM_KINDS, SystemSpec, sample_invariant
from .transport import lemma3_plan, solve_transport, transport_bruteforce

TABLE_COLUMNS = ("system", "metric", "mode", "n", "epsilon", "k", "ln_k", "m", "seed")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


@dataclass
class ResultBundle:
    config: ExperimentConfig
    curves: list[ScalingCurve]
    verdicts: list[dict[str, Any]]
    diagnostic: dict[str, Any] | None
    timing: dict[str, float]
    errors: list[str] = field(default_factory=list)
    version: str = __version__

    def rows(self) -> list[dict[str, Any]]:
        return [r for c in self.curves for r in c.rows()]

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "config": self.config.to_dict(),
            "curves": [c.to_dict() for c in self.curves],
            "verdicts": self.verdicts,
            "diagnostic": self.diagnostic,
            "timing": self.timing,
            "errors": list(self.errors),
            "environment": {"python": platform.python_version(), "numpy": np.__version__},
        }


def _curve_task(cfg: ExperimentConfig, index: int) -> tuple[int, dict[str, ScalingCurve], float]:
    t0 = time.perf_counter()
    rho = build_metric(cfg.metrics[index], cfg.system)
    curves = scaling_curves(cfg.system, rho, cfg.modes, cfg.schedule, cfg.eps_grid, cfg.m, cfg.seed, p=cfg.p,
                            strategy=cfg.strategy, max_resamples=cfg.max_resamples)
    return index, curves, time.perf_counter() - t0


def _slug(text: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in text).strip("_")


def write_bundle(bundle: ResultBundle, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.json").write_text(json.dumps(bundle.to_dict(), indent=2))
    (out / "config.yaml").write_text(bundle.config.to_yaml())
    with open(out / "scaling.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS)
        w.writeheader()
        for row in bundle.rows():
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    for stale in plots.glob("*.dat"):
        stale.unlink()
    for idx, curve in enumerate(bundle.curves):
        for eps in curve.eps_grid:
            n, y = curve.series(eps)
            name = f"{idx:02d}_{_slug(curve.provenance['metric'])}_{curve.mode}_eps{eps:g}.dat"
            lines = [f"# {curve.provenance['system']} {curve.provenance['metric']} {curve.mode} eps={eps:g}",
                     "# n ln_k"]
            lines += [f"{int(a)} {float(b)!r}" for a, b in zip(n, y)]
            (plots / name).write_text("\n".join(lines) + "\n")


def run_experiment(cfg: ExperimentConfig, out: Path | None = None, workers: int | None = None,
                   log: Callable[[str], None] | None = None) -> ResultBundle:
    """All (metric, mode) curves, their verdicts and the spectrum diagnostic.

    Metrics run as independent tasks; results are merged by metric index so
    the worker count cannot change the output.
    """
    log = log or (lambda s: None)
    t0 = time.perf_counter()
    workers = workers or os.cpu_count() or 1
    results: dict[int, dict[str, ScalingCurve]] = {}
    timing: dict[str, float] = {}
    errors: list[str] = []
    indices = range(len(cfg.metrics))
    if workers == 1 or len(cfg.metrics) == 1:
        for i in indices:
            try:
                _, curves, dt = _curve_task(cfg, i)
                results[i], timing[f"metric[{i}]"] = curves, dt
                log(f"metric[{i}] done in {dt:.1f}s")
            except Exception as exc:  # flushed below
                errors.append(f"metric[{i}]: {type(exc).__name__}: {exc}")
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(cfg.metrics))) as pool:
            futures = {i: pool.submit(_curve_task, cfg, i) for i in indices}
            for i, fut in futures.items():
                try:
                    _, curves, dt = fut.result()
                    results[i], timing[f"metric[{i}]"] = curves, dt
                    log(f"metric[{i}] done in {dt:.1f}s")
                except Exception as exc:
                    errors.append(f"metric[{i}]: {type(exc).__name__}: {exc}")
    curves = [results[i][mode] for i in sorted(results) for mode in cfg.modes]
    verdicts, growth = [], []
    for c in curves:
        if c.gaps:
            errors.append(f"{c.provenance['metric']} {c.mode}: {len(c.gaps)} cells missing")
            verdicts.append({"class": "inconclusive", "mode": c.mode, "provenance": dict(c.provenance),
                             "notes": ["curve has gaps"]})
            continue
        try:
            v = classify_growth(c, **cfg.classify)
        except ValueError as exc:
            verdicts.append({"class": "inconclusive", "mode": c.mode, "provenance": dict(c.provenance),
                             "notes": [str(exc)]})
            continue
        growth.append(v)
        verdicts.append(v.to_dict())
        log(f"{c.provenance['metric']} {c.mode}: {v.label} {v.per_eps}")
    diagnostic = spectrum_diagnostic(growth).to_dict() if growth else None
    timing["total"] = time.perf_counter() - t0
    bundle = ResultBundle(cfg, curves, verdicts, diagnostic, timing, errors)
    if out is not None:
        write_bundle(bundle, out)
    return bundle


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


@dataclass
class SuiteResult:
    name: str
    checked: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def _catalog_cases() -> list[tuple[Semimetric, SystemSpec]]:
    rot, ber, pas = SystemSpec.rotation(), SystemSpec.bernoulli_shift(), SystemSpec.pascal()
    return [
        (cut_semimetric([Arc(0.0, 0.5), Arc(0.5, 1.0)]), rot),
        (indicator_semimetric(Arc(0.2, 0.7)), rot),
        (arc_metric(), rot),
        (cut_semimetric([Cylinder("0"), Cylinder("1")]), ber),
        (indicator_semimetric(Cylinder("01")), pas),
        (dyadic_metric(), pas),
        (hamming_window_metric(8), pas),
    ]


def _squared_arc() -> Semimetric:
    """Broken fixture: squared arc length breaks the triangle inequality."""
    base = arc_metric()
    return Semimetric(lambda x, y: base.evaluator(x, y) ** 2, "squared_arc", is_metric=True,
                      diameter_hint=0.25, domain="circle")


def _suite_axioms(inject: Sequence[str], trials: int) -> SuiteResult:
    res = SuiteResult("metric axioms")
    cases = _catalog_cases()
    if "broken_metric" in inject:
        cases.append((_squared_arc(), SystemSpec.rotation()))
    for rho, sys_ in cases:
        sample = sample_invariant(sys_, 300, seed=1, horizon=64)
        targets: list[Any] = [rho] + [IteratedMetric(rho, sys_, n, mode) for n in (1, 8) for mode in
                                      ("average", "sup")]
        for t in targets:
            rep = metric_axiom_check(t, sample, trials, seed=2)
            res.checked += rep.trials
            if not rep.ok:
                res.failures.append(f"{t.name}: {rep.triangle} triangle, {rep.symmetry} symmetry, "
                                    f"{rep.reflexivity} reflexivity violations; witnesses {rep.witnesses[:2]}")
    return res


def _suite_transport(inject: Sequence[str], instances: int) -> SuiteResult:
    res = SuiteResult("transport vs vertex enumeration")
    rng = np.random.default_rng(3)
    for t in range(instances):
        m, n = (int(v) for v in rng.integers(1, 5, size=2))
        a, b = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(n))
        C = rng.random((m, n))
        plan = solve_transport(a, b, C)
        cost = plan.cost * (1.5 if "broken_ot" in inject else 1.0)
        ref = transport_bruteforce(a, b, C)
        res.checked += 1
        if abs(cost - ref) > 1e-9 or plan.dual_gap > 1e-9:
            res.failures.append(f"instance {t}: a={np.round(a, 4).tolist()} b={np.round(b, 4).tolist()} "
                                f"C={np.round(C, 4).tolist()} solver={cost:.12g} enumeration={ref:.12g} "
                                f"gap={plan.dual_gap:.3g}")
    return res


def _suite_cover(instances: int) -> SuiteResult:
    res = SuiteResult("greedy vs minimal cover")
    rng = np.random.default_rng(4)
    cases = _catalog_cases()
    for t in range(instances):
        rho, sys_ = cases[t % len(cases)]
        m = int(rng.integers(2, 13))
        eps = float(rng.choice([0.05, 0.1, 0.2, 0.3, 0.5]))
        sample = sample_invariant(sys_, m, seed=int(rng.integers(1 << 31)))
        D = distance_matrix(rho.normalized(), sample)
        net = greedy_net(D, eps)
        opt = minimal_cover_bruteforce(sample, rho, eps, distances=D)
        harmonic = sum(1.0 / i for i in range(1, m + 1))
        res.checked += 1
        if net.covered_mass <= 1.0 - eps or net.k < opt or net.k > harmonic * opt + 1e-9:
            res.failures.append(f"instance {t} ({rho.name}, m={m}, eps={eps}): greedy {net.k}, minimum {opt}, "
                                f"covered {net.covered_mass:.3f}")
    return res


def _suite_lemma3(seeds: int) -> SuiteResult:
    res = SuiteResult("net transport bound")
    sys_ = SystemSpec.rotation()
    rho = IteratedMetric(cut_semimetric([Arc(0.0, 0.5), Arc(0.5, 1.0)]), sys_, 64, "average")
    eps = 0.1
    for s in range(seeds):
        sample = sample_invariant(sys_, 400, seed=s)
        D = distance_matrix(rho, sample)
        net = greedy_net(D, eps)
        _, plan, bound = lemma3_plan(sample, net.centers, eps, rho, distances=D)
        res.checked += 1
        if plan.cost > bound + 1e-12:
            res.failures.append(f"seed {s}: cost {plan.cost:.6g} > bound {bound:.6g}")
    return res


def verify(inject: Sequence[str] = (), quick: bool = False) -> list[SuiteResult]:
    scale = 0.2 if quick else 1.0
    return [
        _suite_axioms(inject, max(int(2000 * scale), 100)),
        _suite_transport(inject, max(int(200 * scale), 20)),
        _suite_cover(max(int(200 * scale), 20)),
        _suite_lemma3(max(int(10 * scale), 2)),
    ]


# ---------------------------------------------------------------------------
# list
# ---------------------------------------------------------------------------


def catalog(kind: str) -> list[str]:
    if kind == "systems":
        return list(SYSTEM_KINDS)
    if kind == "metrics":
        return list(METRIC_KINDS)
    if kind == "configs":
        return list(bundled_configs())
    raise ValueError(f"unknown catalog {kind!r}")


def _describe(kind: str, name: str) -> str:
    if kind == "metrics":
        return f"{name:16s} {METRIC_HELP[name]}"
    if kind == "configs":
        first = bundled_configs()[name].read_text().splitlines()[0]
        return f"{name:20s} {first.lstrip('# ')}"
    return name


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scaling-entropy", description="Scaling entropy experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="compute scaling curves for a config")
    r.add_argument("--config", required=True, help="YAML path or bundled config name")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--workers", type=int, default=None, help="worker processes (default: all cores)")
    r.add_argument("--seed", type=int, default=None, help="root seed (overrides the config)")
    r.add_argument("--quiet", action="store_true")
    v = sub.add_parser("verify", help="run the property suites")
    v.add_argument("--inject", action="append", default=[], choices=["broken_metric", "broken_ot"],
                   help="add a deliberately broken fixture")
    v.add_argument("--quick", action="store_true", help="smaller suites")
    v.add_argument("--quiet", action="store_true")
    ls = sub.add_parser("list", help="catalog dump")
    ls.add_argument("kind", choices=["systems", "metrics", "configs"])
    return ap


def _cmd_run(args) -> int:
    say = (lambda s: None) if args.quiet else (lambda s: print(s, file=sys.stderr))
    try:
        cfg = load_config(resolve_config(args.config))
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed", "must be >= 0")
            cfg = replace(cfg, seed=args.seed)
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers", "must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.output)
    try:
        bundle = run_experiment(cfg, out, args.workers, say)
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if not args.quiet:
        for v in bundle.verdicts:
            prov = v.get("provenance", {})
            print(f"{prov.get('metric')} [{v.get('mode')}]: {v.get('label', v['class'])}")
        if bundle.diagnostic:
            print(f"spectrum: {bundle.diagnostic['message']}")
        print(f"wrote {out}")
    for e in bundle.errors:
        print(f"error: {e}", file=sys.stderr)
    return EXIT_RUNTIME if bundle.errors else EXIT_OK


def _cmd_verify(args) -> int:
    suites = verify(args.inject, args.quick)
    for s in suites:
        print(f"{'PASS' if s.passed else 'FAIL'} {s.name} ({s.checked} checks)")
        if not args.quiet:
            for f in s.failures[:5]:
                print(f"    {f}")
    ok = all(s.passed for s in suites)
    print("all suites passed" if ok else "verification failed")
    return EXIT_OK if ok else EXIT_VERIFY


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "verify":
        return _cmd_verify(args)
    for name in catalog(args.kind):
        print(_describe(args.kind, name))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
