"""Scenario pipeline: builds grid, field, flow and pair from a config and runs
each stage, producing JSON-ready report sections."""

from __future__ import annotations

import math
import time
import warnings
from functools import cached_property
from pathlib import Path

import numpy as np

from . import __version__
from .cohomology import (build_excised_pair, build_pair, check_delta_squared, euler_consistent,
                         relative_cuplength, ring_report, ring_structure)
from .config import ScenarioConfig
from .expr import compile_expression, parse_expression
from .field import ScalarField, pseudo_gradient
from .flow import IntegratorConfig
from .grid import CellSet, CubicalGrid, Domain, combinatorial_boundary
from .indexpair import (FAIL, INCONCLUSIVE, PASS, CheckResult, IndexPairData, benci_pair,
                        check_axiom_i, check_axiom_ii, check_gamma_3T, check_regular_criterion,
                        check_weak_regularity)
from .lyapunov import check_monotonicity, forward_core, lyapunov_sample, regularize
from .verify import (Box, covering_times, default_neighborhood, find_critical_points,
                     lemma41_witness, palais_smale_diagnostic, sample_region, verify_bound,
                     verify_first_deformation, verify_second_deformation)

SKIPPED = "skipped"
SECTIONS = ("index-pair", "lyapunov", "cohomology", "deform", "cover", "bound")
SHARPNESS_SCALE = 0.4


def combine(statuses) -> str:
    statuses = list(statuses)
    if FAIL in statuses:
        return FAIL
    if INCONCLUSIVE in statuses:
        return INCONCLUSIVE
    if statuses and all(s == SKIPPED for s in statuses):
        return SKIPPED
    return PASS


def _clean(obj):
    """Make a report value JSON-safe: numpy scalars to Python, non-finite to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


class Scenario:
    """Lazily built objects for one configuration; every stage caches its result."""

    def __init__(self, config: ScenarioConfig, threads: int = 1, seed: int | None = None):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.threads = threads
        self.domain = Domain(config.lo, config.hi, config.periodic)
        self.grid = CubicalGrid(self.domain, config.resolution)
        self.field = ScalarField.from_text(config.objective, self.domain)
        if any(config.periodic):
            self.field.check_periodicity()
        self.Y = pseudo_gradient(self.field, config.gradient_mode)
        self.cfg = IntegratorConfig(config.step, config.t_max, config.safety_margin, threads)

    # -- pair ---------------------------------------------------------------

    @cached_property
    def _pair_and_A(self):
        c = self.config
        src = c.pair["source"]
        g = self.grid
        if src == "benci":
            if "box" in c.pair:
                A = CellSet.from_box(g, c.pair["box"]["lo"], c.pair["box"]["hi"])
            else:
                A = CellSet.full(g)
            return benci_pair(A, c.T, self.Y, self.cfg), A
        if src == "explicit":
            base = c.base_dir or Path(".")
            N = CellSet.from_csv(g, _resolve(base, c.pair["N"]))
            L = CellSet.from_csv(g, _resolve(base, c.pair["L"]))
            return IndexPairData(N, L, T=c.T), None
        fn = compile_expression(parse_expression(c.pair["expression"], g.dim))
        N = CellSet.from_predicate(
            g, lambda P: np.broadcast_to(fn([P[:, i] for i in range(g.dim)]), (len(P),)) <= 0)
        return IndexPairData(N, combinatorial_boundary(N), T=c.T), None

    @property
    def pair(self) -> IndexPairData:
        return self._pair_and_A[0]

    @property
    def A(self):
        return self._pair_and_A[1]

    @cached_property
    def critical(self):
        return find_critical_points(self.pair.V, self.field, self.config.grad_tol)

    def neighborhoods(self, half_width=None):
        hw = half_width if half_width is not None else self.config.cover.get("half_width")
        boxes = []
        for cp in self.critical:
            b = default_neighborhood(self.grid, cp.location)
            boxes.append(Box(b.center, hw) if hw is not None else b)
        return boxes

    # -- stages -------------------------------------------------------------

    @cached_property
    def index_pair(self) -> dict:
        p, A = self.pair, self.A
        c = self.config
        flags = dict(p.flags)
        flags["axiom_i"] = check_axiom_i(p, c.horizon, self.Y, self.cfg)
        flags["axiom_ii"] = check_axiom_ii(p, c.horizon, self.Y, self.cfg)
        flags["weakly_regular"] = check_weak_regularity(p, c.horizon, self.Y, self.cfg)
        flags["regular_criterion"] = check_regular_criterion(p, self.Y, self.cfg)
        if A is not None:
            flags["gamma_3T"] = check_gamma_3T(A, p.N, p.L, p.T, self.Y, self.cfg)
        self.checked_pair = p.with_flags(**flags)
        return {
            "status": combine(r.status for r in flags.values()),
            "source": c.pair["source"],
            "cells": {"N": len(p.N), "L": len(p.L), "V": len(p.V)},
            "flags": {k: v.as_dict() for k, v in sorted(flags.items())},
        }

    @cached_property
    def lyapunov(self) -> dict:
        c = self.config
        weak = self.index_pair["flags"]["weakly_regular"]["status"]
        if weak == FAIL:
            return {"status": SKIPPED, "note": "pair is not weakly regular"}
        p = self.pair
        core = forward_core(p, c.horizon, self.Y, self.cfg)
        lyap, sample = lyapunov_sample(p, core, self.Y, self.cfg, c.T_cut)
        self.lyapunov_function, self.lyapunov_values = lyap, sample
        idx = sample.indices
        in_L = p.L.mask[tuple(idx.T)]
        in_core = core.cells.mask[tuple(idx.T)]
        rest = ~in_L & ~in_core
        floor = 1.0 - lyap.tail_bound - 1e-3
        anchored = bool(np.all(sample.g[in_L] == 0.0) and np.all(sample.g[in_core] >= floor)
                        and np.all((sample.g[rest] > 0) & (sample.g[rest] < 1)))
        reg = regularize(p, sample, c.epsilon)
        self.regularized = reg
        crit = check_regular_criterion(reg, self.Y, self.cfg)
        mono = self._monotonicity(lyap, p, core)
        ok = anchored and crit.status != FAIL and mono["violations"] == 0
        return {
            "status": PASS if ok else FAIL,
            "core_cells": len(core.cells),
            "T_cut": c.T_cut,
            "tail_bound": lyap.tail_bound,
            "epsilon": c.epsilon,
            "g_range": [float(sample.g.min()), float(sample.g.max())],
            "anchoring": anchored,
            "L_prime_cells": len(reg.L),
            "regularized_criterion": crit.as_dict(),
            "monotonicity": mono,
        }

    def _monotonicity(self, lyap, p, core):
        region = p.interior - core.cells
        if not region:
            return {"checked": 0, "violations": 0, "non_strict": 0, "max_excess": None,
                    "witness": None, "note": "no cells strictly between L and the core"}
        X = sample_region(region, self.config.samples, self.seed)
        rng = np.random.default_rng(self.seed)
        t = rng.uniform(self.cfg.step, 1.0, len(X))
        return check_monotonicity(lyap, X, t)

    @cached_property
    def ring(self):
        return ring_structure(build_pair(self.pair.N, self.pair.L))

    @cached_property
    def cohomology(self) -> dict:
        ring = self.ring
        rep = ring_report(ring)
        rp = ring.pair
        delta_ok = check_delta_squared(rp.relative) and check_delta_squared(rp.absolute)
        euler_ok = euler_consistent(rp, ring.betti_relative)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ex = ring_structure(build_excised_pair(self.pair.N, self.pair.L))
            cl_ex = relative_cuplength(ex)
        ok = delta_ok and euler_ok and rep["ring_laws"] and cl_ex == rep["relative_cuplength"]
        rep.update({"status": PASS if ok else FAIL, "delta_squared_zero": delta_ok,
                    "euler_consistent": euler_ok, "excision_CL": cl_ex})
        return rep

    @cached_property
    def deform(self) -> dict:
        d = self.config.deform
        if not d:
            return {"status": SKIPPED, "note": "no deformation levels configured"}
        out = {}
        n, seed = self.config.samples, self.seed
        if "first" in d:
            a, b = d["first"]["a"], d["first"]["b"]
            rep = verify_first_deformation(self.pair, self.field, self.Y, a, b, self.cfg,
                                           self.critical, n, seed)
            probe = verify_first_deformation(self.pair, self.field, self.Y, a, b, self.cfg,
                                             self.critical, n, seed, t_scale=SHARPNESS_SCALE)
            out["first"] = rep.as_dict()
            out["sharpness_probe"] = {"T": probe.T, "failures": probe.failures,
                                      "scale": SHARPNESS_SCALE}
        if "second" in d:
            s = d["second"]
            level = [cp for cp in self.critical if abs(cp.value - s["c"]) <= 1e-9]
            boxes = [Box(tuple(cp.location), s["half_width"]) if "half_width" in s
                     else default_neighborhood(self.grid, cp.location) for cp in level]
            rep = verify_second_deformation(self.pair, self.field, self.Y, s["c"], s["eps0"],
                                            s.get("T", 1.0), boxes, self.cfg, self.critical,
                                            n, seed)
            out["second"] = rep.as_dict()
        out["status"] = combine(v["status"] for k, v in out.items() if "status" in v)
        return out

    @cached_property
    def cover(self) -> dict:
        boxes = self.neighborhoods()
        rep = covering_times(self.pair, self.field, self.Y, self.critical, boxes, self.cfg,
                             self.config.cover.get("T_level", 1.0), self.config.samples,
                             self.seed)
        w = lemma41_witness(self.pair, self.Y, self.cfg)
        out = rep.as_dict()
        out["lemma41"] = w
        out["status"] = combine([rep.status, w["neighborhood"]])
        return out

    @cached_property
    def bound(self) -> dict:
        rep = verify_bound(self.pair, self.field, self.cfg, ring=self.ring,
                           critical=self.critical)
        hw = self.config.cover.get("half_width", 1.5 * self.grid.max_width)
        ps = palais_smale_diagnostic(self.pair.V, self.field, self.critical, hw)
        out = rep.as_dict()
        out["palais_smale"] = ps
        out["status"] = rep.verdict
        return out

    def section(self, name: str) -> dict:
        attr = name.replace("-", "_")
        return getattr(self, attr)

    def dump_cells(self, directory) -> list[str]:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        p = self.pair
        for tag, S in (("N", p.N), ("L", p.L), ("V", p.V)):
            S.to_csv(out / f"{tag}.csv")
            written.append(f"{tag}.csv")
        if hasattr(self, "regularized"):
            self.regularized.L.to_csv(out / "L_prime.csv")
            self.lyapunov_values.core.cells.to_csv(out / "core.csv")
            self.lyapunov_values.to_csv(out / "lyapunov.csv")
            written += ["L_prime.csv", "core.csv", "lyapunov.csv"]
        return written


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def run(config: ScenarioConfig, subcommand: str, threads: int = 1, seed: int | None = None,
        cells_out=None) -> dict:
    """Run one subcommand (or ``all``) and return the report dictionary."""
    if subcommand == "all":
        names = [s for s in SECTIONS if s in config.checks]
    elif subcommand in SECTIONS:
        names = [subcommand]
    else:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    sc = Scenario(config, threads=threads, seed=seed)
    results, timing = {}, {}
    for name in names:
        t0 = time.perf_counter()
        try:
            results[name] = sc.section(name)
        except Exception as exc:  # noqa: BLE001 - reported, not swallowed
            results[name] = {"status": FAIL, "error": f"{type(exc).__name__}: {exc}"}
        timing[name] = time.perf_counter() - t0
    files = sc.dump_cells(cells_out) if cells_out else []
    report = {
        "tool": {"name": "conleykit", "version": __version__,
                 "numpy": np.__version__, "scipy": _scipy_version()},
        "scenario": config.name,
        "subcommand": subcommand,
        "config": config.as_dict(),
        "seed": sc.seed,
        "results": results,
        "status": combine(r["status"] for r in results.values()),
        "cells_written": files,
        "runtime": {"threads": threads, "wall_clock_seconds": timing,
                    "finished": time.strftime("%Y-%m-%dT%H:%M:%S")},
    }
    return _clean(report)


def _scipy_version() -> str:
    import scipy

    return scipy.__version__
