"""
Susceptibility function Ψ(λ) = Σ λⁿ ∫ρ X (A∘fⁿ)' dx.

Y = σ₀ X(ω)/ω' carries simple poles at the polar endpoints. The poles are
removed with the functions P_α, the corrections w_α and the preperiodic
combinations, leaving Y₀ in H₀; Ψ then splits into an operator part (poles
at 1/μ_k, outside the unit disk) and a polar part (poles at 1/ω_ℓ, inside).
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np
import scipy.linalg
from numpy.polynomial import Polynomial, legendre

from .errors import (ConfigError, DecompositionResidual, NonPolarCycle,
                     ResidueMismatch, ResolventIllConditioned, SeriesDivergence)
from .map_model import EPS, MINUS, PLUS, critical_points_of_iterate
from .transfer_operator import apply_pointwise

logger = logging.getLogger(__name__)

RICHARDSON_STEPS = (1e-2, 5e-3, 2.5e-3, 1.25e-3)


class Observable:
    """A polynomial observable on I, with its derivative."""

    def __init__(self, name: str, poly: Polynomial):
        self.name = name
        self.poly = poly
        self.dpoly = poly.deriv()

    def __call__(self, x):
        return self.poly(x)

    def derivative(self, x):
        return self.dpoly(x)

    @classmethod
    def from_config(cls, spec, domain: Tuple[float, float]):
        """Named family or {"coeffs": [...]} (ascending)."""
        a, b = domain
        named = {
            "endpoint_vanishing": Polynomial([-a * b, a + b, -1.0]),
            "constant": Polynomial([1.0]),
            "identity": Polynomial([0.0, 1.0]),
            "square": Polynomial([0.0, 0.0, 1.0]),
        }
        if isinstance(spec, str):
            if spec not in named:
                raise ConfigError(f"unknown observable {spec!r}", known=sorted(named))
            return cls(spec, named[spec])
        if isinstance(spec, dict) and "coeffs" in spec:
            coeffs = [float(c) for c in spec["coeffs"]]
            if not coeffs:
                raise ConfigError("observable coefficients must not be empty")
            return cls(spec.get("name", "polynomial"), Polynomial(coeffs))
        raise ConfigError("observable must be a family name or {'coeffs': [...]}", spec=spec)

    def to_dict(self):
        return {"name": self.name, "coeffs": [float(c) for c in self.poly.coef]}


class PiecewiseFunction:
    """A function on the disjoint union of the J_k, one callable per interval."""

    def __init__(self, pieces: Sequence[Callable]):
        self.pieces = list(pieces)

    @classmethod
    def zero(cls, m: int):
        return cls([_zero] * m)

    @classmethod
    def from_nodes(cls, basis, values):
        values = np.asarray(values)
        return cls([(lambda z, k=k: basis.evaluate(values, k, z)) for k in range(len(basis.pieces))])

    def __call__(self, k: int, z):
        return self.pieces[k](np.asarray(z))

    def __add__(self, other: "PiecewiseFunction"):
        return PiecewiseFunction([(lambda z, f=f, g=g: f(z) + g(z))
                                  for f, g in zip(self.pieces, other.pieces)])

    def __sub__(self, other: "PiecewiseFunction"):
        return self + other.scaled(-1.0)

    def scaled(self, factor):
        return PiecewiseFunction([(lambda z, f=f: factor * f(z)) for f in self.pieces])

    def transferred(self, branches, times: int = 1):
        """𝓛₀^times applied pointwise."""
        current = self
        for _ in range(times):
            previous = current.pieces
            current = PiecewiseFunction([
                (lambda z, k=k, prev=previous: apply_pointwise(branches, prev, k, z))
                for k in range(len(previous))])
        return current

    def at_nodes(self, basis) -> np.ndarray:
        return np.concatenate([np.asarray(self(k, piece.nodes)) + 0.0
                               for k, piece in enumerate(basis.pieces)])


def _zero(z):
    return np.zeros(np.shape(z))


def graded_quadrature(y_left: float, y_right: float, levels: int = 12, ratio: float = 0.5,
                      order: int = 16, ends: str = "both") -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule with panels shrinking geometrically toward the ends."""
    length = y_right - y_left
    if ends == "both":
        half = 0.5 * length
        left_breaks = y_left + half * np.concatenate([[0.0], ratio ** np.arange(levels, -1, -1)])
        right_breaks = np.concatenate([y_right - half * ratio ** np.arange(1, levels + 1), [y_right]])
        breaks = np.concatenate([left_breaks, right_breaks])
    else:
        breaks = y_left + length * np.concatenate([[0.0], ratio ** np.arange(levels, -1, -1)])
        if ends == "right":
            breaks = (y_left + y_right - breaks)[::-1]
    reference_nodes, reference_weights = legendre.leggauss(order)
    lo, hi = breaks[:-1], breaks[1:]
    nodes = (0.5 * (lo + hi))[:, None] + (0.5 * (hi - lo))[:, None] * reference_nodes
    weights = (0.5 * (hi - lo))[:, None] * reference_weights
    return nodes.ravel(), weights.ravel()


def richardson_limit(func, steps: Sequence[float]) -> float:
    """Limit of func(ξ) as ξ -> 0 from samples at successively halved ξ."""
    table = [np.asarray([func(xi) for xi in steps])]
    factor = 2.0
    while len(table[-1]) > 1:
        row = table[-1]
        table.append((factor * row[1:] - row[:-1]) / (factor - 1.0))
        factor *= 2.0
    return complex(table[-1][0]) if np.iscomplexobj(table[-1]) else float(table[-1][0])


@dataclass(frozen=True)
class SidedPoint:
    """A polar doubled endpoint viewed from inside its carrier interval."""

    cut_index: int
    side: str
    point: float
    gamma: float
    interval: int
    other_end: float
    length: float

    @property
    def inward(self) -> float:
        return 1.0 if self.side == PLUS else -1.0

    def at_depth(self, xi):
        """Points γ ± ξ inside the carrier interval."""
        return self.gamma + self.inward * np.asarray(xi)

    def pole(self, y):
        """P(y) = 1/d - d/ℓ², d the inward distance from γ."""
        d = self.inward * (np.asarray(y) - self.gamma)
        return 1.0 / d - d / self.length ** 2

    def label(self) -> str:
        return f"{self.point:.12g}{self.side}"

    def to_dict(self):
        return {"point": self.point, "side": self.side, "gamma": self.gamma,
                "interval": self.interval, "length": self.length}


class YFunction:
    """Y(y) = σ₀(y) X(ω(y)) / ω'(y) on each J_k, with its polar data."""

    def __init__(self, density, X: Observable, atlas):
        self.density = density
        self.X = X
        self.atlas = atlas
        self.residues: Dict[Tuple[int, str], float] = {}
        self.finite_parts: Dict[Tuple[int, str], float] = {}
        self.report: List[Dict[str, Any]] = []

    def __call__(self, k: int, y):
        chart = self.atlas[k]
        return self.density.sigma(y, k) * self.X(chart.omega(y)) / chart.omega_prime(y)

    def piecewise(self) -> PiecewiseFunction:
        return PiecewiseFunction([(lambda z, k=k: self(k, z)) for k in range(len(self.atlas))])


def sided_points(partition, atlas) -> List[SidedPoint]:
    points = []
    for cut_index, side in partition.sides():
        if not partition.is_polar(cut_index, side):
            continue
        k = partition.interval_of_side(cut_index, side)
        chart = atlas[k]
        if side == PLUS:
            gamma, other = chart.y_left, chart.y_right
        else:
            gamma, other = chart.y_right, chart.y_left
        points.append(SidedPoint(cut_index, side, partition.cuts[cut_index], gamma, k,
                                 other, chart.length))
    return points


def build_Y(density, X: Observable, atlas, partition, residue_tol: float = 1e-6) -> YFunction:
    """Evaluate Y and its expansion A/ξ + B + O(ξ) at every polar side.

    Raises:
        ResidueMismatch: Richardson and closed-form residues disagree.
    """
    Y = YFunction(density, X, atlas)
    for sp in sided_points(partition, atlas):
        k = sp.interval
        steps = [s * sp.length for s in RICHARDSON_STEPS]
        extrapolated = richardson_limit(lambda xi: xi * Y(k, sp.at_depth(xi)), steps)
        closed = float(density.sigma(sp.gamma, k) * X(sp.point))
        finite = richardson_limit(lambda xi: Y(k, sp.at_depth(xi)) - closed / xi, steps)
        mismatch = abs(extrapolated - closed)
        Y.residues[(sp.cut_index, sp.side)] = closed
        Y.finite_parts[(sp.cut_index, sp.side)] = float(finite)
        Y.report.append({"point": sp.point, "side": sp.side, "residue": closed,
                         "extrapolated": float(extrapolated), "mismatch": mismatch,
                         "tolerance": residue_tol, "finite_part": float(finite)})
        if mismatch > residue_tol * max(1.0, abs(closed)):
            raise ResidueMismatch("extrapolated residue of Y disagrees with σ₀(γ)X(q)",
                                  point=sp.point, side=sp.side, extrapolated=extrapolated,
                                  closed_form=closed)
    logger.info("Y residues: %s", {f"{c}{s}": round(v, 12) for (c, s), v in Y.residues.items()})
    return Y


@dataclass
class PoleBasis:
    """Polar data: sided points, their images, weights and correction functions."""

    points: List[SidedPoint]
    image: List[int]
    kappa: List[float]
    cycles: List[List[int]]
    preperiod: int
    matching: Dict[int, Tuple[int, float]]
    stretch: Dict[int, float]
    defects: Dict[int, np.ndarray] = field(default_factory=dict)
    corrections: Dict[int, np.ndarray] = field(default_factory=dict)
    checks: Dict[str, Any] = field(default_factory=dict)

    @property
    def periodic(self) -> List[int]:
        return [i for cycle in self.cycles for i in cycle]

    @property
    def preperiodic(self) -> List[int]:
        periodic = set(self.periodic)
        return [i for i in range(len(self.points)) if i not in periodic]

    def index_of(self, cut_index: int, side: str) -> int:
        for i, sp in enumerate(self.points):
            if sp.cut_index == cut_index and sp.side == side:
                return i
        raise KeyError((cut_index, side))

    def expansion(self, cycle: List[int]) -> float:
        """Λ = Π |κ| along a cycle."""
        return float(np.prod([abs(self.kappa[i]) for i in cycle]))

    def signed_product(self, cycle: List[int]) -> float:
        return float(np.prod([self.kappa[i] for i in cycle]))

    def polar_matrix(self) -> np.ndarray:
        """M: 𝓛₀ on span{P_α - w_α}, ordered as ``periodic``."""
        order = self.periodic
        position = {i: n for n, i in enumerate(order)}
        M = np.zeros((len(order), len(order)))
        for i in order:
            M[position[self.image[i]], position[i]] = self.kappa[i]
        return M

    def polar_eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.polar_matrix())

    def pole(self, i: int, m: int) -> PiecewiseFunction:
        sp = self.points[i]
        pieces = [_zero] * m
        pieces[sp.interval] = sp.pole
        return PiecewiseFunction(pieces)

    def to_dict(self):
        return {
            "points": [sp.to_dict() for sp in self.points],
            "image": list(self.image),
            "kappa": list(self.kappa),
            "cycles": [[self.points[i].label() for i in c] for c in self.cycles],
            "expansion": [self.expansion(c) for c in self.cycles],
            "polar_eigenvalues": [complex(v) for v in self.polar_eigenvalues()],
            "preperiod": self.preperiod,
            "matching": {self.points[b].label(): {"periodic": self.points[a].label(), "factor": f,
                                                  "stretch_weight": self.stretch[b]}
                         for b, (a, f) in self.matching.items()},
            "checks": self.checks,
        }


def _image_side(partition, fmap, graph, sp: SidedPoint) -> Tuple[int, str]:
    image = float(fmap(sp.point))
    cut_index = int(np.argmin(np.abs(np.asarray(partition.cuts) - image)))
    orientation = graph.signs[sp.interval] * sp.inward
    return cut_index, (PLUS if orientation > 0 else MINUS)


def pole_basis(partition, atlas, fmap, graph, op, residue_tol: float = 1e-7) -> PoleBasis:
    """Sided polar points, their dynamics under 𝓛₀ and the cocycle defects h_α.

    Raises:
        NonPolarCycle: a periodic postcritical point has no polar side, or the
            image of a polar side is not polar.
    """
    points = sided_points(partition, atlas)
    lookup = {(sp.cut_index, sp.side): i for i, sp in enumerate(points)}
    for cut_index, orbit_index in partition.point_index.items():
        if not any(partition.is_polar(cut_index, s) for s in (MINUS, PLUS)):
            raise NonPolarCycle("postcritical point without a polar side",
                                point=partition.cuts[cut_index])

    image, kappa = [], []
    for sp in points:
        target = _image_side(partition, fmap, graph, sp)
        if target not in lookup:
            raise NonPolarCycle("image of a polar endpoint is not polar on the matching side",
                                point=sp.point, image=partition.cuts[target[0]], side=target[1])
        image.append(lookup[target])
        kappa.append(graph.signs[sp.interval] * np.sqrt(abs(float(fmap.derivative(sp.point)))))

    cycles, seen = [], set()
    for start in range(len(points)):
        path, i = [], start
        while i not in path and i not in seen:
            path.append(i)
            i = image[i]
        if i in path:
            cycle = path[path.index(i):]
            cycles.append(cycle)
            seen.update(cycle)
        seen.update(path)
    if not cycles:
        raise NonPolarCycle("no periodic polar cycle")
    periodic = {i for c in cycles for i in c}

    steps_to_cycle = {}
    for i in range(len(points)):
        n, j = 0, i
        while j not in periodic:
            j, n = image[j], n + 1
        steps_to_cycle[i] = n
    preperiod = max(steps_to_cycle.values())

    def push(i, n):
        weight, j = 1.0, i
        for _ in range(n):
            weight, j = weight * kappa[j], image[j]
        return j, weight

    matching, stretch = {}, {}
    for beta in range(len(points)):
        if beta in periodic:
            continue
        end_beta, weight_beta = push(beta, preperiod)
        for alpha in periodic:
            end_alpha, weight_alpha = push(alpha, preperiod)
            if end_alpha == end_beta:
                matching[beta] = (alpha, weight_beta / weight_alpha)
                break
        stretch[beta] = float(np.prod([abs(kappa[j]) for j in _path(beta, image, steps_to_cycle[beta])]))

    basis = PoleBasis(points, image, [float(v) for v in kappa], cycles, preperiod, matching, stretch)
    for cycle in cycles:
        if basis.expansion(cycle) <= 1.0:
            raise NonPolarCycle("polar cycle is not expanding", expansion=basis.expansion(cycle))

    _cocycle_defects(basis, op, residue_tol)
    logger.info("Pole basis: %d sided points, cycles %s, Λ=%s, q=%d",
                len(points), [[points[i].label() for i in c] for c in cycles],
                [round(basis.expansion(c), 12) for c in cycles], preperiod)
    return basis


def _path(i, image, n):
    path = []
    for _ in range(n):
        path.append(i)
        i = image[i]
    return path


def _cocycle_defects(basis: PoleBasis, op, residue_tol: float):
    """h_α = 𝓛₀P_α - κ_α P_{α+1} at the nodes, with a residue check at the image pole."""
    branches = op.branches
    m = branches.m
    worst = 0.0
    for alpha in basis.periodic:
        nxt = basis.image[alpha]
        defect = basis.pole(alpha, m).transferred(branches) - basis.pole(nxt, m).scaled(basis.kappa[alpha])
        basis.defects[alpha] = defect.at_nodes(op.basis)
        sp = basis.points[nxt]
        steps = [s * sp.length for s in RICHARDSON_STEPS]
        residue = richardson_limit(lambda xi: xi * defect(sp.interval, sp.at_depth(xi)), steps)
        worst = max(worst, abs(residue))
    basis.checks["cocycle_residue"] = worst
    basis.checks["cocycle_residue_tol"] = residue_tol
    if worst > residue_tol:
        logger.warning("Cocycle defect keeps a residue of %.3g", worst)


def solve_w(op, basis: PoleBasis, residual_tol: float = 1e-8, endpoint_tol: float = 1e-8) -> PoleBasis:
    """Corrections w_α in H₀ with 𝓛₀(P_α - w_α) = κ_α (P_{α+1} - w_{α+1}).

    For each polar cycle α_1..α_p: u = Σ_i K_i 𝓛₀^{p-1-i} h_{i+1} with
    K_i = κ_1⋯κ_i, v solves (𝓛^p - K_p) v = u', w_1 = ∫v from ϖa, and the
    remaining w follow from the cocycle recursion.

    Raises:
        ResolventIllConditioned: the dense system is singular or its solve
            residual exceeds ``residual_tol``.
    """
    size = op.basis.size
    derivative = op.basis.differentiation
    worst_endpoint = 0.0
    for cycle in basis.cycles:
        p = len(cycle)
        u = np.zeros(size)
        K = 1.0
        for i, alpha in enumerate(cycle):
            u += K * np.linalg.matrix_power(op.L0, p - 1 - i) @ basis.defects[alpha]
            K *= basis.kappa[alpha]
        rhs = derivative @ u
        system = op.powered(p) - K * np.eye(size)
        try:
            v = scipy.linalg.solve(system, rhs)
        except (scipy.linalg.LinAlgError, ValueError) as exc:
            raise ResolventIllConditioned("(𝓛^p - Λ) is singular", cycle=cycle,
                                          multiplier=K) from exc
        residual = float(np.max(np.abs(system @ v - rhs)) / max(1.0, np.max(np.abs(rhs))))
        if residual > residual_tol:
            raise ResolventIllConditioned("(𝓛^p - Λ)v = u' solve is inaccurate",
                                          residual=residual)
        w, ends = op.basis.antiderivative(v)
        worst_endpoint = max(worst_endpoint, abs(ends[-1][1]))
        basis.corrections[cycle[0]] = w
        for i in range(p - 1):
            alpha = cycle[i]
            basis.corrections[cycle[i + 1]] = (op.L0 @ basis.corrections[alpha]
                                               - basis.defects[alpha]) / basis.kappa[alpha]
        logger.debug("w for cycle of length %d: solve residual %.3g, w(ϖb)=%.3g",
                     p, residual, ends[-1][1])
    basis.checks["w_right_end"] = worst_endpoint
    basis.checks["w_right_end_tol"] = endpoint_tol
    if worst_endpoint > endpoint_tol:
        logger.warning("Correction w does not vanish at ϖb: %.3g", worst_endpoint)
    return basis


def polar_eigen_relation(op, basis: PoleBasis) -> float:
    """max |(𝓛₀^p - K_p)(P_1 - w_1)| at the interior nodes, over all cycles."""
    branches = op.branches
    worst = 0.0
    for cycle in basis.cycles:
        alpha = cycle[0]
        p = len(cycle)
        K = basis.signed_product(cycle)
        pole = basis.pole(alpha, branches.m)
        pole_part = pole.transferred(branches, p).at_nodes(op.basis) - K * pole.at_nodes(op.basis)
        w = basis.corrections[alpha]
        w_part = np.linalg.matrix_power(op.L0, p) @ w - K * w
        worst = max(worst, float(np.max(np.abs(pole_part - w_part))))
    return worst


@dataclass
class SusceptibilityDecomposition:
    """Y = Y₀ + Y₁ + Y₂ with Y₀ and the Ỹ_β held as node values."""

    Y: YFunction
    poles: PoleBasis
    coefficients: Dict[int, float]
    preperiodic_coefficients: Dict[int, float]
    Y0: np.ndarray
    Y1: PiecewiseFunction
    Y2: PiecewiseFunction
    Y_tilde: Dict[int, np.ndarray]
    checks: Dict[str, Any]

    def to_dict(self):
        labels = {i: sp.label() for i, sp in enumerate(self.poles.points)}
        return {
            "residues": self.Y.report,
            "c": {labels[i]: v for i, v in self.coefficients.items()},
            "c_tilde": {labels[i]: v for i, v in self.preperiodic_coefficients.items()},
            "checks": self.checks,
        }


def _join_pairs(atlas):
    """Interior joins (k, k+1) excluding mixed polarity joins."""
    pairs = []
    for k in range(len(atlas) - 1):
        if atlas[k].right_polar == atlas[k + 1].left_polar:
            pairs.append(k)
    return pairs


def endpoint_limits(F: PiecewiseFunction, atlas) -> List[Tuple[float, float]]:
    """(F(y_left+), F(y_right-)) on every chart, by Richardson extrapolation."""
    limits = []
    for k, chart in enumerate(atlas.charts):
        steps = [s * chart.length for s in RICHARDSON_STEPS]
        left = richardson_limit(lambda xi: np.real(F(k, chart.y_left + xi)), steps)
        right = richardson_limit(lambda xi: np.real(F(k, chart.y_right - xi)), steps)
        limits.append((float(left), float(right)))
    return limits


def derivative_integral(F: PiecewiseFunction, atlas) -> float:
    """∫_J F' dy as the sum of end differences of F over the charts."""
    return float(sum(right - left for left, right in endpoint_limits(F, atlas)))


def h0_residuals(basis, values, atlas) -> Dict[str, float]:
    """Endpoint values at ϖa, ϖb and jumps across interior joins."""
    ends = basis.endpoint_values(values)
    jumps = [abs(ends[k][1] - ends[k + 1][0]) for k in _join_pairs(atlas)]
    return {"outer_values": float(max(abs(ends[0][0]), abs(ends[-1][1]))),
            "join_jumps": float(max(jumps)) if jumps else 0.0}


def decompose_Y(Y: YFunction, poles: PoleBasis, op, residue_tol: float = 1e-7,
                h0_tol: float = 1e-6) -> SusceptibilityDecomposition:
    """Subtract the polar parts of Y.

    c̃_β is the residue of Y at γ̃_β; c_α the residue at γ_α plus the
    contributions Λ̃_β c̃_β that Y₂ places there.

    Raises:
        DecompositionResidual: Y₀ keeps a residue or violates the H₀ conditions.
    """
    basis = op.basis
    m = op.branches.m
    atlas = Y.atlas
    residue = {i: Y.residues[(sp.cut_index, sp.side)] for i, sp in enumerate(poles.points)}

    c_tilde = {beta: residue[beta] for beta in poles.preperiodic}
    c = {alpha: residue[alpha] for alpha in poles.periodic}
    for beta, (alpha, factor) in poles.matching.items():
        c[alpha] += factor * c_tilde[beta]

    def corrected(alpha):
        return poles.pole(alpha, m) - PiecewiseFunction.from_nodes(basis, poles.corrections[alpha])

    Y1 = PiecewiseFunction.zero(m)
    for alpha, value in c.items():
        Y1 = Y1 + corrected(alpha).scaled(value)
    Y2 = PiecewiseFunction.zero(m)
    Y_tilde = {}
    for beta, value in c_tilde.items():
        alpha, factor = poles.matching[beta]
        Y2 = Y2 + (poles.pole(beta, m) - corrected(alpha).scaled(factor)).scaled(value)
        pole_part = (poles.pole(beta, m) - poles.pole(alpha, m).scaled(factor)).transferred(
            op.branches, poles.preperiod).at_nodes(basis)
        w_part = np.linalg.matrix_power(op.L0, poles.preperiod) @ poles.corrections[alpha]
        Y_tilde[beta] = pole_part + factor * w_part

    Y0_function = Y.piecewise() - Y1 - Y2
    Y0 = Y0_function.at_nodes(basis)

    worst_residue = 0.0
    for sp in poles.points:
        steps = [s * sp.length for s in RICHARDSON_STEPS]
        worst_residue = max(worst_residue, abs(richardson_limit(
            lambda xi: xi * Y0_function(sp.interval, sp.at_depth(xi)), steps)))
    h0 = h0_residuals(basis, Y0, atlas)
    derivative = basis.differentiation
    checks = {
        "Y0_residue": worst_residue, "Y0_residue_tol": residue_tol,
        "Y0_h0": h0, "h0_tol": h0_tol,
        "Y0_derivative_integral": abs(derivative_integral(Y0_function, atlas)),
        "Y0_derivative_integral_nodal": float(abs(basis.mass @ (derivative @ Y0))),
        "Y_tilde_derivative_integral": float(max([abs(basis.mass @ (derivative @ v))
                                                  for v in Y_tilde.values()] or [0.0])),
        "Y_tilde_h0": {poles.points[b].label(): h0_residuals(basis, v, atlas)
                       for b, v in Y_tilde.items()},
    }
    if worst_residue > residue_tol:
        raise DecompositionResidual("Y₀ keeps a polar residue", residue=worst_residue)
    if max(h0.values()) > h0_tol:
        raise DecompositionResidual("Y₀ violates the H₀ boundary conditions", **h0)
    logger.info("Decomposition: c=%s c_tilde=%s, ∫Y0'=%.3g",
                {poles.points[i].label(): round(v, 12) for i, v in c.items()},
                {poles.points[i].label(): round(v, 12) for i, v in c_tilde.items()},
                checks["Y0_derivative_integral"])
    return SusceptibilityDecomposition(Y, poles, c, c_tilde, Y0, Y1, Y2, Y_tilde, checks)


class MeromorphicPsi:
    """Ψ(λ) = Ψ₀ + Ψ₁ + Ψ₂ from the decomposition of Y and the observable A."""

    def __init__(self, decomposition: SusceptibilityDecomposition, op, density, A: Observable,
                 near_pole: float = 1e-6):
        self.decomposition = decomposition
        self.op = op
        self.A = A
        self.near_pole = near_pole
        basis = op.basis
        atlas = decomposition.Y.atlas
        poles = decomposition.poles
        self.atlas = atlas
        self.mass = basis.mass
        self.B = np.concatenate([A(atlas[k].omega(piece.nodes)) for k, piece in enumerate(basis.pieces)])
        self.deflated = op.L - np.outer(density.values, self.mass)

        derivative = basis.differentiation
        sources = [decomposition.Y0] + [decomposition.Y_tilde[b] for b in sorted(decomposition.Y_tilde)]
        columns = []
        self.source_mass = []
        for values in sources:
            d = derivative @ values
            self.source_mass.append(float(self.mass @ d))
            # mass @ d = ∫Y₀' vanishes up to discretization; project out the σ₀ component
            columns.append(d - (self.mass @ d) * density.values)
        self.sources = np.column_stack(columns)
        self.preperiodic = sorted(decomposition.Y_tilde)
        self.c_tilde = np.array([decomposition.preperiodic_coefficients[b] for b in self.preperiodic])

        self.periodic = poles.periodic
        self.M = poles.polar_matrix()
        self.c = np.array([decomposition.coefficients[a] for a in self.periodic])
        m = op.branches.m
        self.m = np.array([
            self.integrate(poles.pole(a, m) - PiecewiseFunction.from_nodes(basis, poles.corrections[a]))
            for a in self.periodic])
        q = poles.preperiod
        self.preperiod = q
        current = decomposition.Y2
        self.head = []
        for _ in range(q):
            self.head.append(self.integrate(current))
            current = current.transferred(op.branches)
        self.pole_locations = self._pole_locations()

    def B_prime(self, k: int, y):
        chart = self.atlas[k]
        return self.A.derivative(chart.omega(y)) * chart.omega_prime(y)

    def integrate(self, F: PiecewiseFunction) -> float:
        """∫_J F B' dy with meshes graded toward every interval end."""
        total = 0.0
        for k, chart in enumerate(self.atlas.charts):
            nodes, weights = graded_quadrature(chart.y_left, chart.y_right)
            total += float(np.sum(weights * np.real(F(k, nodes)) * self.B_prime(k, nodes)))
        return total

    def inner(self, values) -> complex:
        return self.mass @ (self.B[:, None] * values) if np.ndim(values) == 2 else self.mass @ (self.B * values)

    def _pole_locations(self) -> np.ndarray:
        values = self.op.eigen()[0][1:]
        operator = 1.0 / values[np.abs(values) > 1e-14]
        polar = np.linalg.eigvals(self.M) if self.M.size else np.empty(0)
        polar = 1.0 / polar[np.abs(polar) > 0]
        return np.concatenate([operator, polar])

    def components(self, lam: complex) -> Dict[str, complex]:
        lam = complex(lam)
        size = self.deflated.shape[0]
        solved = scipy.linalg.solve(np.eye(size) - lam * self.deflated, self.sources.astype(complex))
        projections = -self.inner(solved)
        psi0 = complex(projections[0])
        psi_tilde = projections[1:]
        if self.M.size:
            psi1 = complex(self.m @ scipy.linalg.solve(np.eye(len(self.c)) - lam * self.M,
                                                       self.c.astype(complex)))
        else:
            psi1 = 0.0j
        head = sum(d * lam ** n for n, d in enumerate(self.head))
        psi2 = complex(head + lam ** self.preperiod * np.sum(self.c_tilde * psi_tilde))
        return {"psi0": psi0, "psi1": psi1, "psi2": psi2}

    def distance_to_poles(self, lam: complex) -> float:
        if not len(self.pole_locations):
            return float("inf")
        return float(np.min(np.abs(self.pole_locations - lam)))

    def __call__(self, lam: complex) -> Tuple[complex, str]:
        """(Ψ(λ), flag) with flag "ok" or "near_pole"."""
        flag = "near_pole" if self.distance_to_poles(lam) < self.near_pole else "ok"
        try:
            parts = self.components(lam)
        except (scipy.linalg.LinAlgError, ValueError):
            return complex(np.nan, np.nan), "near_pole"
        return parts["psi0"] + parts["psi1"] + parts["psi2"], flag

    def value(self, lam: complex) -> complex:
        return self(lam)[0]

    def evaluate_grid(self, grid) -> List[Dict[str, Any]]:
        rows = []
        for lam in grid:
            value, flag = self(lam)
            rows.append({"lambda": complex(lam), "psi": value, "flag": flag})
        return rows


def psi_meromorphic(decomposition, op, density, A: Observable, lam) -> Tuple[complex, str]:
    return MeromorphicPsi(decomposition, op, density, A)(lam)


def contour_residue(func, center: complex, radius: float, n: int = 64) -> complex:
    """(1/2πi) ∮ func over a circle, by the trapezoidal rule."""
    theta = 2.0 * np.pi * np.arange(n) / n
    points = center + radius * np.exp(1j * theta)
    values = np.array([func(z) for z in points])
    return complex(np.mean(values * radius * np.exp(1j * theta)))


def pole_table(psi: MeromorphicPsi, n_keep: int = 4, contour_points: int = 64,
               agreement_tol: float = 1e-6, certified=None,
               n_resolved: int = 2) -> List[Dict[str, Any]]:
    """Operator poles 1/μ_k (k ≥ 1) and polar poles 1/ω_ℓ with residues.

    With ``certified`` eigenvalues (the determinant zeros) each μ_k is
    matched to the nearest collocation eigenpair. The residue and its
    contour check use that eigenpair for k < ``n_resolved`` only; the
    reported location is always 1/μ_k from ``certified``.
    """
    values, left, right = psi.op.eigen()
    table = []
    all_poles = psi.pole_locations
    if certified is None:
        targets = values[1:min(n_keep, len(values))]
        n_resolved = len(values)
    else:
        targets = np.asarray(certified)[1:n_keep]
    for k, mu in enumerate(targets, start=1):
        if abs(mu) < 1e-14:
            continue
        j = int(np.argmin(np.abs(values - mu)))
        if k >= n_resolved:
            table.append(_unresolved_entry(1.0 / mu, mu, values[j]))
            continue
        r = right[:, j]
        l = np.conj(left[:, j])
        norm = l @ r
        coefficients = (l @ psi.sources) / norm
        collocated = 1.0 / values[j]
        weight = psi.inner(r)
        residue = weight * coefficients[0] / values[j]
        if len(psi.preperiodic):
            residue += collocated ** psi.preperiod * np.sum(psi.c_tilde * weight * coefficients[1:]) / values[j]
        entry = _pole_entry(psi, "operator", collocated, residue, all_poles, contour_points,
                            agreement_tol, eigenvalue=values[j])
        entry.update({"location": complex(1.0 / mu), "modulus": float(abs(1.0 / mu)),
                      "eigenvalue": complex(mu), "collocation_location": complex(collocated)})
        table.append(entry)

    if psi.M.size:
        try:
            omegas, vectors = np.linalg.eig(psi.M)
            right_weights = np.linalg.solve(vectors, psi.c)
        except np.linalg.LinAlgError as exc:
            raise ResolventIllConditioned("polar matrix is not diagonalizable") from exc
        left_weights = psi.m @ vectors
        for ell, omega in enumerate(omegas):
            lam = 1.0 / omega
            residue = -left_weights[ell] * right_weights[ell] / omega
            table.append(_pole_entry(psi, "polar", lam, residue, all_poles, contour_points,
                                     agreement_tol, eigenvalue=omega))
    table.sort(key=lambda entry: entry["modulus"])
    return table


def _unresolved_entry(lam, mu, collocated):
    return {
        "family": "operator",
        "location": complex(lam),
        "modulus": float(abs(lam)),
        "eigenvalue": complex(mu),
        "collocation_location": complex(1.0 / collocated),
        "residue": None,
        "contour_residue": None,
        "contour_radius": None,
        "resolved": False,
        "agrees": None,
        "inside_unit_disk": bool(abs(lam) < 1.0),
    }


def _pole_entry(psi, family, lam, residue, all_poles, contour_points, agreement_tol, eigenvalue):
    others = all_poles[np.abs(all_poles - lam) > 1e-9 * max(1.0, abs(lam))]
    spacing = float(np.min(np.abs(others - lam))) if len(others) else abs(lam)
    radius = 0.1 * min(spacing, abs(lam))
    contour = contour_residue(psi.value, lam, radius, contour_points)
    scale = max(1e-12, abs(residue), abs(contour))
    return {
        "family": family,
        "location": complex(lam),
        "modulus": float(abs(lam)),
        "eigenvalue": complex(eigenvalue),
        "residue": complex(residue),
        "contour_residue": contour,
        "contour_radius": radius,
        "resolved": True,
        "agrees": bool(abs(residue - contour) <= agreement_tol * max(1.0, scale)),
        "inside_unit_disk": bool(abs(lam) < 1.0),
    }


class DirectSeries:
    """Terms t_n = ∫ ρ X (A∘fⁿ)' dx, integrated lap by lap in chart coordinates.

    Each term carries a rounding floor proportional to Σ|lap contributions|.
    Terms at or below their floor are unresolved: the tail ratio comes from
    the last two resolved terms, and once the terms sink into rounding the
    geometric tail is dropped.
    """

    def __init__(self, density, X: Observable, A: Observable, fmap, atlas, n_terms: int = 14,
                 order: int = 20, max_modulus: float = 0.45, floor_factor: float = 1e3):
        self.density = density
        self.X = X
        self.A = A
        self.fmap = fmap
        self.atlas = atlas
        self.n_terms = n_terms
        self.max_modulus = max_modulus
        self.reference_nodes, self.reference_weights = legendre.leggauss(order)
        critical, level = critical_points_of_iterate(fmap, max(n_terms, 1))
        terms, magnitudes = zip(*(self._term(n, critical[level < n]) for n in range(n_terms + 1)))
        self.terms = np.array(terms)
        self.floors = floor_factor * EPS * np.array(magnitudes)
        self.resolved = np.abs(self.terms) > self.floors
        indices = np.nonzero(self.resolved)[0]
        last = indices[-2:]
        if len(last) == 2 and last[1] == last[0] + 1:
            self.ratio = float(self.terms[last[1]] / self.terms[last[0]])
        else:
            self.ratio = 0.0
        self.tail_dropped = not bool(self.resolved[-1])
        logger.info("Direct series: %d terms (%d resolved), ratio %.6g", n_terms + 1,
                    len(indices), self.ratio)

    @property
    def radius(self) -> float:
        """Term-ratio estimate of the nearest pole modulus."""
        return 1.0 / abs(self.ratio) if self.ratio else float("inf")

    def _term(self, n: int, critical) -> Tuple[float, float]:
        """(t_n, Σ|lap contributions|)."""
        breaks = np.unique(np.concatenate([np.asarray(self.atlas.cuts), critical]))
        lo, hi = breaks[:-1], breaks[1:]
        owner = self.atlas.locate(0.5 * (lo + hi))
        total, magnitude = 0.0, 0.0
        for j, chart in enumerate(self.atlas.charts):
            mask = owner == j
            if not np.any(mask):
                continue
            y0, y1 = chart.varpi(lo[mask]), chart.varpi(hi[mask])
            half = 0.5 * (y1 - y0)
            y = (0.5 * (y0 + y1))[:, None] + half[:, None] * self.reference_nodes
            x = chart.omega(y)
            image, slope = self.fmap.iterate(x, n)
            integrand = self.density.sigma(y, j) * self.X(x) * self.A.derivative(image) * slope
            laps = np.sum(half[:, None] * self.reference_weights * integrand, axis=1)
            total += float(np.sum(laps))
            magnitude += float(np.sum(np.abs(laps)))
        return total, magnitude

    def partial_sums(self, lam: complex) -> np.ndarray:
        powers = complex(lam) ** np.arange(self.n_terms + 1)
        return np.cumsum(powers * self.terms)

    def __call__(self, lam: complex) -> complex:
        """Partial sum closed by a geometric tail t_N r λ^{N+1}/(1 - rλ).

        Raises:
            SeriesDivergence: |λ| exceeds the enforced disk or |λ r| >= 1.
        """
        lam = complex(lam)
        if abs(lam) > self.max_modulus:
            raise SeriesDivergence("λ outside the direct-series disk",
                                   modulus=abs(lam), limit=self.max_modulus)
        if abs(lam * self.ratio) >= 1.0:
            raise SeriesDivergence("terms grow inside the enforced disk", ratio=self.ratio,
                                   modulus=abs(lam))
        total = self.partial_sums(lam)[-1]
        if self.tail_dropped:
            return complex(total)
        tail = self.terms[-1] * self.ratio * lam ** (self.n_terms + 1) / (1.0 - lam * self.ratio)
        return complex(total + tail)

    def certified_radius(self, safety: float = 0.9) -> float:
        """Largest |λ| the series is evaluated at: the enforced disk or safety/|r|."""
        return min(self.max_modulus, safety * self.radius)

    def to_dict(self):
        return {"terms": [float(t) for t in self.terms], "floors": self.floors.tolist(),
                "resolved": self.resolved.tolist(), "ratio": self.ratio,
                "tail_dropped": self.tail_dropped, "pole_radius_estimate": self.radius,
                "certified_radius": self.certified_radius(), "max_modulus": self.max_modulus}


def psi_direct_series(density, X: Observable, A: Observable, fmap, atlas, lam,
                      n_terms: int = 14) -> np.ndarray:
    """Partial sums Σ_{n≤N} λⁿ t_n."""
    return DirectSeries(density, X, A, fmap, atlas, n_terms).partial_sums(lam)


def birkhoff_average(fmap, X: Observable, A: Observable, n_samples: int = 1_000_000,
                     n_orbits: int = 1000, transient: int = 100, seed: int = 0) -> float:
    """Orbit average of X·A', an independent estimate of Ψ(0)."""
    rng = np.random.default_rng(seed)
    a, b = fmap.domain
    x = rng.uniform(a, b, n_orbits)
    for _ in range(transient):
        x = np.clip(fmap(x), a, b)
    total = 0.0
    steps = n_samples // n_orbits
    for _ in range(steps):
        total += float(np.sum(X(x) * A.derivative(x)))
        x = np.clip(fmap(x), a, b)
    return total / (steps * n_orbits)
