"""
End-to-end orchestration: map -> charts -> operators -> susceptibility,
plus the verification suite run by ``unimodal-response verify``.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from .chart_atlas import (build_atlas, conjugated_branches, verify_assumption_A,
                          verify_chart_asymptotics)
from .config import RunConfig, lambda_grid
from .cycle_expansion import cycle_expansion
from .errors import ConfigError, NotMixing, SeriesDivergence, UnimodalResponseError
from .map_model import (AnalyticMap, adjacency_matrix, build_partition, classify_polarity,
                        covering_graph, postcritical_orbit, renormalize_band)
from .performance_monitor import PerformanceMonitor
from .report_writer import ReportWriter
from .susceptibility import (DirectSeries, MeromorphicPsi, Observable, build_Y, decompose_Y,
                             polar_eigen_relation, pole_basis, pole_table, solve_w)
from .transfer_operator import (assemble_operators, check_structure, invariance_defect,
                                invariant_density, spectrum)

logger = logging.getLogger(__name__)

STAGES = ("map", "charts", "operators", "susceptibility")


@dataclass
class MapStage:
    fmap: AnalyticMap
    orbit: Any
    partition: Any
    graph: Any
    renormalization: Optional[Dict[str, Any]] = None

    def to_dict(self):
        return {
            "map": self.fmap.to_dict(),
            "orbit": self.orbit.to_dict(),
            "partition": self.partition.to_dict(),
            "graph": self.graph.to_dict(),
            "renormalization": self.renormalization,
        }


@dataclass
class PerturbationResult:
    name: str
    X: Observable
    decomposition: Any
    psi: MeromorphicPsi
    direct: DirectSeries
    poles: List[Dict[str, Any]]
    grid: List[Dict[str, Any]]


@dataclass
class ReportBundle:
    """Everything one run produced, ready to be written."""

    config: RunConfig
    map_stage: Optional[MapStage] = None
    atlas: Any = None
    asymptotics: List[Dict[str, Any]] = field(default_factory=list)
    branches: Any = None
    assumption: Optional[Dict[str, Any]] = None
    op: Any = None
    refined: Any = None
    cycles: Any = None
    spectrum: Optional[Dict[str, Any]] = None
    density: Any = None
    structure: Optional[Dict[str, Any]] = None
    observable: Optional[Observable] = None
    poles: Any = None
    perturbations: List[PerturbationResult] = field(default_factory=list)
    verification: Optional[Dict[str, Any]] = None

    def write(self, writer: ReportWriter):
        if self.map_stage is not None:
            writer.write_json("partition.json", self.map_stage.to_dict())
        if self.atlas is not None:
            writer.write_json("atlas.json", {"atlas": self.atlas.to_dict(),
                                             "asymptotics": self.asymptotics,
                                             "assumption_a": self.assumption})
        if self.spectrum is not None:
            writer.write_json("spectrum.json", {"spectrum": self.spectrum,
                                                "cycle_expansion": self.cycles.to_dict()
                                                if self.cycles is not None else None,
                                                "structure": self.structure,
                                                "density_mass": self.density.total_mass()})
            x, rho = self.density.samples(self.config.density_samples)
            writer.write_csv("density.csv", ["x", "rho"], zip(x, rho))
        if self.perturbations:
            poles = {}
            for result in self.perturbations:
                writer.write_csv(f"psi_{result.name}.csv",
                                 ["re_lambda", "im_lambda", "re_psi", "im_psi", "flag"],
                                 ([row["lambda"].real, row["lambda"].imag, row["psi"].real,
                                   row["psi"].imag, row["flag"]] for row in result.grid))
                poles[result.name] = {"X": result.X.to_dict(),
                                      "decomposition": result.decomposition.to_dict(),
                                      "pole_basis": result.decomposition.poles.to_dict(),
                                      "direct_series": result.direct.to_dict(),
                                      "poles": result.poles}
            writer.write_json("poles.json", {"observable": self.observable.to_dict(),
                                             "perturbations": poles})
        if self.verification is not None:
            writer.write_json("verification.json", self.verification)


def analyze_map(config: RunConfig) -> MapStage:
    """Orbit, partition, covering graph and polarity; renormalizes periodic graphs."""
    fmap = AnalyticMap.from_config(config.map)
    orbit = postcritical_orbit(fmap, config.max_iter, config.orbit_tol)
    partition = build_partition(orbit, fmap, config.markov_tol)
    renormalization = None
    try:
        graph = covering_graph(partition, fmap, config.markov_tol)
    except NotMixing as exc:
        if exc.details.get("period", 0) <= 1:
            raise
        band_map, band, period = renormalize_band(fmap, partition)
        renormalization = {"period": period, "band": list(band),
                           "original_partition": partition.to_dict(),
                           "original_edges": adjacency_matrix(partition, fmap)[0].tolist()}
        fmap = band_map
        orbit = postcritical_orbit(fmap, config.max_iter, config.orbit_tol)
        partition = build_partition(orbit, fmap, config.markov_tol)
        graph = covering_graph(partition, fmap, config.markov_tol)
    partition = classify_polarity(partition, fmap, orbit)
    return MapStage(fmap, orbit, partition, graph, renormalization)


def _perturbation_name(spec, index: int) -> str:
    if isinstance(spec, str):
        return spec
    return str(spec.get("name", f"X{index}"))


def run_pipeline(config: RunConfig, until: str = "susceptibility",
                 monitor: Optional[PerformanceMonitor] = None) -> ReportBundle:
    """Run the stages up to ``until`` and collect their results.

    Deterministic for a given config: randomized checks use ``config.seed``.
    """
    monitor = monitor or PerformanceMonitor()
    bundle = ReportBundle(config)
    stop = STAGES.index(until)

    with monitor.stage("map"):
        bundle.map_stage = analyze_map(config)
    if stop < 1:
        return bundle
    stage = bundle.map_stage

    with monitor.stage("charts"):
        bundle.atlas = build_atlas(stage.partition, config.chart_shape)
        bundle.asymptotics = [verify_chart_asymptotics(chart) for chart in bundle.atlas.charts]
        bundle.branches = conjugated_branches(bundle.atlas, stage.partition, stage.graph, stage.fmap)
        bundle.assumption = verify_assumption_A(bundle.branches, config.epsilon)
    if stop < 2:
        return bundle

    with monitor.stage("operators"):
        bundle.op = assemble_operators(bundle.branches, config.degree)
        bundle.refined = bundle.op.refine(config.degree_step)
        bundle.cycles = cycle_expansion(stage.fmap, stage.partition, stage.graph,
                                        config.cycle_order, config.cycle_dps, config.n_keep)
        bundle.spectrum = spectrum(bundle.op, config.n_keep, config.degree_step,
                                   config.eigen_tol, refined=bundle.refined,
                                   cycles=bundle.cycles, n_collocation=config.collocation_checked)
        bundle.density = invariant_density(bundle.op)
        bundle.structure = check_structure(bundle.op, config.n_random, config.seed, bundle.density)
    if stop < 3:
        return bundle

    with monitor.stage("susceptibility"):
        analyze_susceptibility(bundle)
    return bundle


def analyze_susceptibility(bundle: ReportBundle) -> ReportBundle:
    """Ψ for every configured perturbation X, evaluated on the configured λ grid."""
    config = bundle.config
    domain = bundle.map_stage.fmap.domain
    bundle.observable = Observable.from_config(config.observable, domain)
    grid = lambda_grid(config.lambda_grid)
    for index, spec in enumerate(config.perturbations):
        X = Observable.from_config(spec, domain)
        bundle.perturbations.append(
            analyze_perturbation(bundle, _perturbation_name(spec, index), X, grid))
    return bundle


def analyze_perturbation(bundle: ReportBundle, name: str, X: Observable, grid) -> PerturbationResult:
    config = bundle.config
    stage = bundle.map_stage
    Y = build_Y(bundle.density, X, bundle.atlas, stage.partition)
    if bundle.poles is None:
        bundle.poles = solve_w(bundle.op, pole_basis(stage.partition, bundle.atlas, stage.fmap,
                                                     stage.graph, bundle.op))
    decomposition = decompose_Y(Y, bundle.poles, bundle.op)
    psi = MeromorphicPsi(decomposition, bundle.op, bundle.density, bundle.observable)
    direct = DirectSeries(bundle.density, X, bundle.observable, stage.fmap, bundle.atlas,
                          config.series_terms, max_modulus=config.series_radius)
    certified = bundle.cycles.leading(config.n_keep) if bundle.cycles is not None else None
    table = pole_table(psi, config.n_keep, certified=certified,
                       n_resolved=config.collocation_checked)
    rows = psi.evaluate_grid(grid)
    logger.info("Psi(%s): Psi(0)=%.12g, Psi(1)=%s, %d poles", name, psi.value(0.0).real,
                psi(1.0)[0], len(table))
    return PerturbationResult(name, X, decomposition, psi, direct, table, rows)


class Verification:
    """Collects pass/fail entries with the measured value and its tolerance."""

    def __init__(self):
        self.checks: List[Dict[str, Any]] = []

    def add(self, name: str, value, tolerance, passed: bool):
        self.checks.append({"check": name, "value": value, "tolerance": tolerance,
                            "passed": bool(passed)})
        if not passed:
            logger.warning("Check failed: %s (value %s, tolerance %s)", name, value, tolerance)

    def at_most(self, name: str, value: float, tolerance: float):
        self.add(name, float(value), tolerance, float(value) <= tolerance)

    @property
    def passed(self) -> bool:
        return all(check["passed"] for check in self.checks)

    def summary(self) -> Dict[str, Any]:
        return {"passed": self.passed,
                "n_checks": len(self.checks),
                "n_failed": sum(not c["passed"] for c in self.checks),
                "checks": self.checks}


def verify(config: RunConfig, monitor: Optional[PerformanceMonitor] = None) -> ReportBundle:
    """Run the full pipeline and every invariant check; result in ``bundle.verification``.

    A numerical error in the susceptibility stage is recorded as a failed
    check when an earlier check has already failed (an unconverged
    discretization); otherwise it propagates.
    """
    monitor = monitor or PerformanceMonitor()
    bundle = run_pipeline(config, until="operators", monitor=monitor)
    checks = Verification()
    _verify_map(bundle, checks)
    _verify_charts(bundle, checks)
    _verify_operators(bundle, checks)
    try:
        with monitor.stage("susceptibility"):
            analyze_susceptibility(bundle)
    except ConfigError:
        raise
    except UnimodalResponseError as exc:
        if checks.passed:
            raise
        checks.add("susceptibility_stage", exc.to_dict(), "no error", False)
    _verify_susceptibility(bundle, checks)
    bundle.verification = checks.summary()
    logger.info("Verification: %d checks, %d failed", len(checks.checks),
                bundle.verification["n_failed"])
    return bundle


def _verify_map(bundle: ReportBundle, checks: Verification):
    stage = bundle.map_stage
    fmap, orbit, partition, graph = stage.fmap, stage.orbit, stage.partition, stage.graph
    cuts = np.asarray(partition.cuts)
    closure = max(float(np.min(np.abs(cuts - fmap(x)))) for i, x in enumerate(cuts)
                  if i != partition.critical_index)
    checks.at_most("orbit_closure", closure, 1e-10)
    multiplier = abs(float(fmap.iterate(orbit.cycle[0], orbit.period)[1]))
    checks.add("cycle_repelling", multiplier, 1.0 + 1e-6, multiplier > 1.0 + 1e-6)
    A = graph.adjacency
    power = np.linalg.matrix_power(A, graph.mixing_exponent)
    previous = np.linalg.matrix_power(A, graph.mixing_exponent - 1) if graph.mixing_exponent > 1 else None
    least = bool(np.all(power > 0) and (previous is None or not np.all(previous > 0)))
    checks.add("mixing_exponent", graph.mixing_exponent, "least N with A^N > 0", least)
    monotone = True
    for j, (u, v) in enumerate(partition.intervals):
        slopes = fmap.derivative(np.linspace(u, v, 66)[1:-1])
        monotone = monotone and bool(np.all(np.sign(slopes) == graph.signs[j]))
    checks.add("branch_monotone", partition.m, "constant sign of f' per interval", monotone)


def _verify_charts(bundle: ReportBundle, checks: Verification):
    for report in bundle.asymptotics:
        for side, entry in report["sides"].items():
            label = f"chart_{report['interval']}_{side}"
            checks.add(f"{label}_order", entry["order"], entry["threshold"],
                       entry["order"] >= entry["threshold"])
            if entry["polar"]:
                checks.at_most(f"{label}_coefficient", abs(entry["coefficient"] - 0.5),
                               entry["coefficient_tol"])
            else:
                checks.at_most(f"{label}_slope", abs(entry["slope"] - 1.0), entry["slope_tol"])

    round_trip = 0.0
    for chart in bundle.atlas.charts:
        y = np.linspace(chart.y_left, chart.y_right, 52)[1:-1]
        round_trip = max(round_trip, float(np.max(np.abs(chart.varpi(chart.omega(y)) - y))))
    checks.at_most("chart_round_trip", round_trip, 1e-11)

    branches = bundle.branches
    consistency, chain = 0.0, 0.0
    for (j, k), branch in branches.branches.items():
        y_left, y_right = branches.interval(k)
        y = np.linspace(y_left, y_right, 102)[1:-1]
        images = branch(y)
        consistency = max(consistency, float(np.max(np.abs(branches.conjugated_map(j, k, images) - y))))
        h = 1e-5 * branches.lengths[k]
        inner = y[(y - h > y_left) & (y + h < y_right)]
        difference = (branch(inner + h) - branch(inner - h)) / (2 * h)
        exact = branch.derivative(inner)
        chain = max(chain, float(np.max(np.abs(difference - exact) / np.maximum(np.abs(exact), 1e-300))))
    checks.at_most("branch_round_trip", consistency, 1e-10)
    checks.at_most("branch_chain_rule", chain, 1e-6)
    checks.add("assumption_a_margin", bundle.assumption["margin"], 0.0, bundle.assumption["margin"] > 0)


def _verify_operators(bundle: ReportBundle, checks: Verification):
    report = bundle.spectrum
    config = bundle.config
    checks.at_most("leading_eigenvalue", report["leading_error"], 1e-9)
    checks.add("spectral_gap", report["spectral_gap"], 1e-6, report["spectral_gap"] > 1e-6)
    checks.at_most("spectrum_in_unit_disk", report["max_modulus_rest"], 1.0 + 1e-8)
    checks.at_most("mass_left_eigenvector", report["mass_left_residual"], 1e-10)
    checks.at_most("eigenvalue_degree_convergence", max(report["degree_deltas"]), config.eigen_tol)
    if bundle.cycles is not None:
        checks.at_most("cycle_expansion_truncation", max(report["truncation_deltas"]),
                       config.eigen_tol)
        checks.at_most("cycle_expansion_leading", abs(report["determinant_leading"] - 1.0), 1e-9)
        checks.at_most("collocation_leading_eigenvalue", report["collocation_leading_error"], 1e-9)

    refined_density = invariant_density(bundle.refined)
    y = bundle.op.basis.nodes
    delta = float(np.max(np.abs(bundle.density.sigma(y) - refined_density.sigma(y))))
    checks.at_most("density_degree_convergence", delta, config.eigen_tol)
    checks.add("density_positive", float(np.min(bundle.density.values)), 0.0,
               float(np.min(bundle.density.values)) > 0)
    checks.at_most("density_mass", abs(bundle.density.total_mass() - 1.0), 1e-10)
    checks.at_most("density_invariance", invariance_defect(bundle.density, bundle.map_stage.fmap), 1e-9)

    structure = bundle.structure
    checks.at_most("mass_drift", structure["mass_drift"], structure["mass_tol"])
    checks.add("positivity", structure["positivity_min"], structure["positivity_tol"],
               structure["positivity_min"] >= structure["positivity_tol"])
    checks.at_most("h1_invariance", max(structure["h1_residuals"].values()), structure["h1_tol"])


def _verify_susceptibility(bundle: ReportBundle, checks: Verification):
    config = bundle.config
    agreement_grid = lambda_grid(config.agreement_grid)
    circle = np.exp(2j * np.pi * np.arange(64) / 64)
    for result in bundle.perturbations:
        prefix = f"psi_{result.name}"
        decomposition = result.decomposition
        poles = decomposition.poles
        checks.at_most(f"{prefix}_cocycle_residue", poles.checks["cocycle_residue"],
                       poles.checks["cocycle_residue_tol"])
        checks.at_most(f"{prefix}_w_right_end", poles.checks["w_right_end"],
                       poles.checks["w_right_end_tol"])
        checks.at_most(f"{prefix}_polar_eigen_relation", polar_eigen_relation(bundle.op, poles), 1e-7)
        omegas = poles.polar_eigenvalues()
        invariance = max([min(abs(omega ** len(c) - poles.signed_product(c)) for c in poles.cycles)
                          for omega in omegas] or [0.0])
        checks.at_most(f"{prefix}_polar_eigenvalue_roots", invariance, 1e-8)
        checks.at_most(f"{prefix}_Y0_residue", decomposition.checks["Y0_residue"],
                       decomposition.checks["Y0_residue_tol"])
        checks.at_most(f"{prefix}_residue_at_one", decomposition.checks["Y0_derivative_integral"], 1e-9)
        checks.at_most(f"{prefix}_residue_at_one_preperiodic",
                       decomposition.checks["Y_tilde_derivative_integral"], 1e-9)

        radius = result.direct.certified_radius()
        inside = agreement_grid[np.abs(agreement_grid) <= radius]
        checks.add(f"{prefix}_direct_series_radius", radius, "covers a grid point",
                   len(inside) > 0 and np.max(np.abs(inside)) > 0)
        worst, diverged = 0.0, 0
        for lam in inside:
            try:
                direct = result.direct(lam)
            except SeriesDivergence:
                diverged += 1
                continue
            value = result.psi.value(lam)
            worst = max(worst, abs(value - direct) / max(abs(direct), 1e-10))
        checks.add(f"{prefix}_two_path_compared", len(inside) - diverged,
                   f"{len(agreement_grid)} grid points, radius {radius:.6g}",
                   diverged == 0 and len(inside) > 0)
        checks.at_most(f"{prefix}_two_path_agreement", worst, config.agreement_tol)

        on_circle = [result.psi(lam) for lam in circle]
        finite = all(np.isfinite(v) and flag == "ok" for v, flag in on_circle)
        checks.add(f"{prefix}_finite_on_unit_circle", len(on_circle), "all finite", finite)
        gap = min([abs(entry["modulus"] - 1.0) for entry in result.poles] or [float("inf")])
        checks.add(f"{prefix}_pole_dichotomy", gap, 1e-3, gap >= 1e-3)
        agree = all(entry["agrees"] for entry in result.poles if entry["resolved"])
        checks.add(f"{prefix}_contour_residues", len(result.poles), "closed form = contour", agree)
