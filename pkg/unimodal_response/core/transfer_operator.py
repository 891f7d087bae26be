"""
Discretized transfer operators 𝓛 and 𝓛₀ on the chart intervals.

(𝓛Φ)_k(z) = Σ_{j≻k} sgn(j) ψ'_jk(z) Φ_j(ψ_jk z)
(𝓛₀Φ)_k(z) = Σ_{j≻k} sgn(j) Φ_j(ψ_jk z)
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import EigensolveFailure, NonPositiveDensity
from .spectral_basis import SpectralBasis

logger = logging.getLogger(__name__)


@dataclass
class OperatorDiscretization:
    """Block matrices of 𝓛 and 𝓛₀ acting on node values."""

    branches: Any
    basis: SpectralBasis
    L: np.ndarray
    L0: np.ndarray
    _eigen: Optional[tuple] = field(default=None, repr=False)

    @property
    def degree(self) -> int:
        return self.basis.degree

    @property
    def mass(self) -> np.ndarray:
        return self.basis.mass

    def refine(self, step: int = 8) -> "OperatorDiscretization":
        """The same operators at degree D + step."""
        return assemble_operators(self.branches, self.degree + step)

    def eigen(self):
        """(eigenvalues, left vectors, right vectors) sorted by decreasing modulus."""
        if self._eigen is None:
            try:
                values, left, right = scipy.linalg.eig(self.L, left=True, right=True)
            except (scipy.linalg.LinAlgError, ValueError) as exc:
                raise EigensolveFailure(f"dense eigensolve failed: {exc}") from exc
            if not np.all(np.isfinite(values)):
                raise EigensolveFailure("non-finite eigenvalues")
            order = np.argsort(-np.abs(values), kind="stable")
            self._eigen = (values[order], left[:, order], right[:, order])
        return self._eigen

    def powered(self, p: int) -> np.ndarray:
        return np.linalg.matrix_power(self.L, p)


def assemble_operators(branches, degree) -> OperatorDiscretization:
    """Collocate 𝓛 and 𝓛₀ at the interior nodes of every J_k.

    Args:
        branches: A BranchSystem (conjugated or synthetic).
        degree: Basis degree D, or a prebuilt SpectralBasis.
    """
    basis = degree if isinstance(degree, SpectralBasis) else SpectralBasis.build(branches.lengths, degree)
    L = np.zeros((basis.size, basis.size))
    L0 = np.zeros((basis.size, basis.size))
    for (j, k) in branches.edges:
        branch = branches.branches[(j, k)]
        sign = branches.signs[(j, k)]
        nodes = basis.pieces[k].nodes
        images = np.real(branch(nodes))
        slopes = np.real(branch.derivative(nodes))
        rows = basis.pieces[j].interpolation_matrix(images)
        L[basis.slice(k), basis.slice(j)] += sign * slopes[:, None] * rows
        L0[basis.slice(k), basis.slice(j)] += sign * rows
    logger.debug("Assembled operators of size %d (D=%d, %d edges)", basis.size, basis.degree,
                 len(branches.edges))
    return OperatorDiscretization(branches, basis, L, L0)


def apply_pointwise(branches, funcs: Sequence[Callable], k: int, z, weighted: bool = False):
    """(𝓛₀F)_k(z), or (𝓛F)_k(z) when ``weighted``, for per-interval callables F_j."""
    z = np.asarray(z)
    total = np.zeros(z.shape, dtype=np.result_type(z, float))
    for j in branches.incoming(k):
        branch = branches.branches[(j, k)]
        term = branches.signs[(j, k)] * funcs[j](branch(z))
        if weighted:
            term = term * branch.derivative(z)
        total = total + term
    return total


def flat_traces(eigenvalues, n_max: int = 6) -> List[complex]:
    """Σ_k μ_k^n for n = 1..n_max."""
    eigenvalues = np.asarray(eigenvalues)
    return [complex(np.sum(eigenvalues ** n)) for n in range(1, n_max + 1)]


def _match(values: np.ndarray, targets) -> List[int]:
    """Index of the nearest entry of ``values`` for each target."""
    return [int(np.argmin(np.abs(values - mu))) for mu in targets]


def spectrum(op: OperatorDiscretization, n_keep: int = 4, degree_step: int = 8,
             tol: float = 1e-8, refined: Optional[OperatorDiscretization] = None,
             cycles: Optional[Any] = None, n_collocation: int = 2) -> Dict[str, Any]:
    """Leading eigenvalues of 𝓛 with convergence flags.

    Without ``cycles`` the collocation eigenvalues are reported and each is
    compared against the refined degree. With a
    :class:`~.cycle_expansion.CycleExpansion` the determinant eigenvalues
    are reported; a determinant eigenvalue counts as converged when its
    truncation delta is below ``tol`` and, for the first ``n_collocation``
    of them, the matched collocation eigenvalue also agrees across degrees.
    The left eigenfunctional of μ_k is a derivative jump of order 2k - 1 at
    the chart ends, so only the leading collocation eigenvalues resolve.

    Raises:
        EigensolveFailure: the dense eigensolve fails.
    """
    values = op.eigen()[0]
    refined = refined if refined is not None else op.refine(degree_step)
    refined_values = refined.eigen()[0]

    # mass is a left eigenvector for μ0 = 1
    mass = op.mass
    left_residual = float(np.max(np.abs(mass @ op.L - mass)))

    if cycles is None:
        kept = values[:n_keep]
        deltas = [float(np.min(np.abs(refined_values - mu))) for mu in kept]
        converged = [d < tol for d in deltas]
        rest = values[1:]
        report = {"method": "collocation", "flat_traces": flat_traces(values)}
    else:
        kept = cycles.leading(n_keep)
        n_check = min(n_collocation, len(kept))
        matched = _match(values, kept[:n_check])
        collocated = values[matched]
        deltas = [float(np.min(np.abs(refined_values - mu))) for mu in collocated]
        offsets = [float(abs(mu - nu)) for mu, nu in zip(kept, collocated)]
        truncation = list(cycles.truncation_deltas[:len(kept)])
        converged = [t < tol and (i >= n_check or deltas[i] < tol)
                     for i, t in enumerate(truncation)]
        rest = np.asarray(cycles.eigenvalues[1:])
        report = {
            "method": "cycle_expansion",
            "cycle_order": cycles.order,
            "truncation_deltas": truncation,
            "collocation_eigenvalues": [complex(mu) for mu in collocated],
            "collocation_offsets": offsets,
            "determinant_leading": cycles.leading_eigenvalue,
            "flat_traces": [complex(cycles.flat_trace(n)) for n in range(1, min(6, cycles.order) + 1)],
        }

    report.update({
        "degree": op.degree,
        "comparison_degree": refined.degree,
        "eigenvalues": [complex(mu) for mu in kept],
        "converged": converged,
        "degree_deltas": deltas,
        "tolerance": tol,
        "leading_error": float(abs(kept[0] - 1.0)),
        "collocation_leading_error": float(abs(values[0] - 1.0)),
        "spectral_gap": float(abs(kept[0]) - np.max(np.abs(rest))) if len(rest) else float("inf"),
        "max_modulus_rest": float(np.max(np.abs(rest))) if len(rest) else 0.0,
        "mass_left_residual": left_residual,
    })
    logger.info("Spectrum (%s, D=%d): %s", report["method"], op.degree,
                ", ".join(f"{mu.real:.10g}{mu.imag:+.2g}j" for mu in kept))
    if not all(converged):
        logger.warning("Eigenvalues not converged (D=%d vs D=%d): degree deltas %s",
                       op.degree, refined.degree, ", ".join(f"{d:.3g}" for d in deltas))
    return report


class InvariantDensity:
    """σ₀ on J as node values, and ρ = σ₀(ϖx) ϖ'(x) on I."""

    def __init__(self, op: OperatorDiscretization, values: np.ndarray, eigenvalue: complex):
        self.op = op
        self.basis = op.basis
        self.values = values
        self.eigenvalue = eigenvalue

    def sigma(self, y, k: Optional[int] = None):
        """σ₀ at global chart coordinates y (interval k, or located)."""
        y = np.asarray(y)
        if k is not None:
            return self.basis.evaluate(self.values, k, y)
        flat = np.atleast_1d(y)
        out = np.empty(flat.shape, dtype=np.result_type(flat, float))
        offsets = np.array([piece.y_left for piece in self.basis.pieces])
        index = np.clip(np.searchsorted(offsets, np.real(flat), side="right") - 1,
                        0, len(offsets) - 1)
        for kk in range(len(offsets)):
            mask = index == kk
            if np.any(mask):
                out[mask] = self.basis.evaluate(self.values, kk, flat[mask])
        return out.reshape(y.shape)

    def rho(self, x):
        atlas = self.op.branches.atlas
        return self.sigma(atlas.varpi(x)) * atlas.varpi_prime(x)

    def total_mass(self) -> float:
        return float(self.basis.mass @ self.values)

    def samples(self, n: int = 201):
        """(x, ρ(x)) on an interior grid of I, for CSV export."""
        atlas = self.op.branches.atlas
        a, b = atlas.cuts[0], atlas.cuts[-1]
        x = np.linspace(a, b, n + 2)[1:-1]
        return x, self.rho(x)


def invariant_density(op: OperatorDiscretization) -> InvariantDensity:
    """Normalized eigenvector of 𝓛 for the eigenvalue closest to 1.

    Raises:
        NonPositiveDensity: σ₀ changes sign at the nodes.
    """
    values, _, right = op.eigen()
    index = int(np.argmin(np.abs(values - 1.0)))
    vector = right[:, index]
    vector = vector / (op.mass @ vector)
    if np.max(np.abs(vector.imag)) > 1e-8 * np.max(np.abs(vector.real)):
        logger.warning("Invariant density eigenvector has imaginary part %.3g",
                       float(np.max(np.abs(vector.imag))))
    sigma = np.real(vector)
    if np.min(sigma) <= 0.0:
        raise NonPositiveDensity("σ₀ is not positive at all nodes", min_value=float(np.min(sigma)))
    residual = float(np.max(np.abs(op.L @ sigma - sigma)))
    logger.info("Invariant density: eigenvalue %.15g, eigen-residual %.3g", values[index].real, residual)
    return InvariantDensity(op, sigma, complex(values[index]))


def _random_coefficients(rng, degree: int, decay: float = 0.7) -> np.ndarray:
    return rng.standard_normal(degree + 1) * decay ** np.arange(degree + 1)


def _from_chebyshev(piece, coeffs):
    return np.polynomial.chebyshev.chebval(piece.reference_nodes, coeffs)


def h1_boundary_residuals(op: OperatorDiscretization, values, partition=None) -> Dict[str, float]:
    """Residuals of the H₁ conditions for node values Φ.

    Φ' = 0 at both ends of J; at interior joins, values agree when both sides
    are nonpolar and -Φ'(left side) = Φ'(right side) when both are polar.
    Mixed joins are not tested.
    """
    basis = op.basis
    ends = basis.endpoint_values(values)
    slopes = basis.endpoint_derivatives(values)
    residual = {"outer_derivative": max(abs(slopes[0][0]), abs(slopes[-1][1])),
                "nonpolar_value": 0.0, "polar_derivative": 0.0}
    charts = op.branches.atlas.charts if op.branches.atlas is not None else None
    for k in range(len(basis.pieces) - 1):
        left_polar = charts[k].right_polar if charts else False
        right_polar = charts[k + 1].left_polar if charts else False
        if not left_polar and not right_polar:
            residual["nonpolar_value"] = max(residual["nonpolar_value"],
                                             abs(ends[k][1] - ends[k + 1][0]))
        elif left_polar and right_polar:
            residual["polar_derivative"] = max(residual["polar_derivative"],
                                               abs(slopes[k][1] + slopes[k + 1][0]))
    return {key: float(value) for key, value in residual.items()}


def h1_test_function(op: OperatorDiscretization, rng) -> np.ndarray:
    """Bumps ((z - y_L)(y_R - z))^2 times a random polynomial on each J_k."""
    parts = []
    for piece in op.basis.pieces:
        coeffs = _random_coefficients(rng, piece.degree - 4)
        bump = ((piece.nodes - piece.y_left) * (piece.y_right - piece.nodes) / piece.length ** 2) ** 2
        parts.append(bump * (1.0 + 0.25 * _from_chebyshev(piece, coeffs)))
    return np.concatenate(parts)


def check_structure(op: OperatorDiscretization, n_random: int = 20, seed: int = 0,
                    density: Optional[InvariantDensity] = None) -> Dict[str, Any]:
    """Mass preservation, positivity and H₁ invariance on random inputs."""
    rng = np.random.default_rng(seed)
    basis = op.basis
    mass = basis.mass

    drift = 0.0
    lowest = np.inf
    h1 = {"outer_derivative": 0.0, "nonpolar_value": 0.0, "polar_derivative": 0.0}
    for _ in range(n_random):
        phi = np.concatenate([_from_chebyshev(piece, _random_coefficients(rng, piece.degree))
                              for piece in basis.pieces])
        drift = max(drift, abs(mass @ (op.L @ phi) - mass @ phi))

        square = np.concatenate([_from_chebyshev(piece, _random_coefficients(rng, piece.degree // 2)) ** 2
                                 for piece in basis.pieces])
        lowest = min(lowest, float(np.min(op.L @ square)))

        image = op.L @ h1_test_function(op, rng)
        for key, value in h1_boundary_residuals(op, image).items():
            h1[key] = max(h1[key], value)

    report = {
        "mass_drift": float(drift), "mass_tol": 1e-11,
        "positivity_min": lowest, "positivity_tol": -1e-10,
        "h1_residuals": h1, "h1_tol": 1e-7,
        "n_random": n_random, "seed": seed,
    }
    if density is not None:
        report["density_eigen_residual"] = float(np.max(np.abs(op.L @ density.values - density.values)))
    logger.info("Structure checks: mass drift %.3g, min positive image %.3g, H1 residual %.3g",
                drift, lowest, max(h1.values()))
    return report


def invariance_defect(density: InvariantDensity, fmap, observable=None) -> float:
    """|∫ρ·(h∘f) - ∫ρ·h| in chart coordinates, h(x) = x² unless given."""
    h = observable if observable is not None else (lambda x: x * x)
    atlas = density.op.branches.atlas
    basis = density.basis
    x = np.concatenate([atlas[k].omega(piece.nodes) for k, piece in enumerate(basis.pieces)])
    weighted = basis.mass * density.values
    return float(abs(weighted @ h(fmap(x)) - weighted @ h(x)))
