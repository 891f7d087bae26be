"""
Singular change of coordinates and the conjugated inverse branches.

Each partition interval I_j = [u, v] gets its own chart ω_j from
J_j = [y_L, y_L + L_j] onto I_j. Charts are laid end to end starting at 0 so
that the basis and the operators can index J globally, but every evaluation
goes through a single interval's chart.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial, legendre

from .errors import (AssumptionAUnverified, AsymptoticsViolation,
                     BranchInversionFailure, ChartSolveFailure,
                     SingularEvaluation)
from .map_model import EPS, MINUS, PLUS, bisect_monotone, compose_polynomials

logger = logging.getLogger(__name__)

_GL_NODES, _GL_WEIGHTS = legendre.leggauss(48)

AFFINE = "affine"
SINE_SQUARED = "sine_squared"
MIXED = "mixed"


def _exponent(sigma, r, s):
    return np.exp(r * sigma + s * sigma * sigma)


def mixed_profile(t, r: float, s: float = 0.0):
    """W(t) = ∫_0^t τ exp(r τ^2 + s τ^4) dτ, complex-capable."""
    t = np.asarray(t)
    T = t * t
    if s == 0.0:
        if r == 0.0:
            return 0.5 * T
        return np.expm1(r * T) / (2.0 * r)
    sigma = 0.5 * T[..., None] * (1.0 + _GL_NODES)
    return 0.25 * T * np.sum(_GL_WEIGHTS * _exponent(sigma, r, s), axis=-1)


def _mixed_profile_dr(t, r: float, s: float):
    T = np.asarray(t) ** 2
    sigma = 0.5 * T[..., None] * (1.0 + _GL_NODES)
    return 0.25 * T * np.sum(_GL_WEIGHTS * sigma * _exponent(sigma, r, s), axis=-1)


def mixed_slope(t, r: float, s: float = 0.0):
    t = np.asarray(t)
    T = t * t
    return t * _exponent(T, r, s)


def mixed_complement(t, length: float, r: float, s: float = 0.0):
    """W(L) - W(L - t), without cancellation as t -> 0."""
    t = np.asarray(t)
    if s == 0.0:
        if r == 0.0:
            return t * (length - 0.5 * t)
        return -np.exp(r * length ** 2) * np.expm1(r * t * (t - 2.0 * length)) / (2.0 * r)
    tau = length - 0.5 * t[..., None] * (1.0 + _GL_NODES)
    return 0.5 * t * np.sum(_GL_WEIGHTS * mixed_slope(tau, r, s), axis=-1)


def solve_mixed_chart(height: float, shape: float = 0.0, tol: float = 1e-15,
                      max_iter: int = 100) -> Tuple[float, float]:
    """Solve W(L) = height and W'(L) = 1 for (r, L) with s = ``shape`` fixed.

    Damped Newton with the analytic Jacobian, seeded where W'(L0) = 1 holds
    with L0 = sqrt(2 height).

    Raises:
        ChartSolveFailure: no convergence, or L leaves (0, inf).
    """
    s = float(shape)
    L = np.sqrt(2.0 * height)
    r = -np.log(L) / L ** 2 - s * L ** 2

    def residual(r_, L_):
        return np.array([L_ * _exponent(L_ * L_, r_, s) - 1.0,
                         float(np.real(mixed_profile(L_, r_, s))) - height])

    F = residual(r, L)
    for iteration in range(max_iter):
        if np.max(np.abs(F)) <= tol * max(1.0, height):
            logger.debug("Mixed chart solved in %d Newton steps: r=%.15g L=%.15g",
                         iteration, r, L)
            return float(r), float(L)
        e = _exponent(L * L, r, s)
        jacobian = np.array([
            [L ** 3 * e, e * (1.0 + 2.0 * r * L ** 2 + 4.0 * s * L ** 4)],
            [float(np.real(_mixed_profile_dr(L, r, s))), L * e],
        ])
        try:
            step = np.linalg.solve(jacobian, -F)
        except np.linalg.LinAlgError as exc:
            raise ChartSolveFailure("singular Jacobian in mixed chart solve",
                                    r=r, L=L) from exc
        damping = 1.0
        for _ in range(40):
            r_new, L_new = r + damping * step[0], L + damping * step[1]
            if L_new > 0.0:
                F_new = residual(r_new, L_new)
                if np.all(np.isfinite(F_new)) and np.max(np.abs(F_new)) < np.max(np.abs(F)):
                    break
            damping *= 0.5
        else:
            if np.max(np.abs(F)) <= 1e3 * tol * max(1.0, height):
                return float(r), float(L)
            raise ChartSolveFailure("mixed chart Newton stalled", r=r, L=L,
                                    residual=float(np.max(np.abs(F))))
        r, L, F = r_new, L_new, F_new
    raise ChartSolveFailure("mixed chart Newton did not converge", r=r, L=L,
                            residual=float(np.max(np.abs(F))))


class IntervalChart:
    """Chart ω: J_j -> I_j with the prescribed endpoint behavior.

    ``rise(t) = ω(y_L + t) - u`` and ``fall(t) = v - ω(y_R - t)`` are evaluated
    without cancellation, so endpoint asymptotics can be measured down to
    t ~ 1e-4.
    """

    def __init__(self, index: int, u: float, v: float, left_polar: bool,
                 right_polar: bool, y_left: float = 0.0, shape: float = 0.0):
        self.index = index
        self.u, self.v = float(u), float(v)
        self.height = self.v - self.u
        self.left_polar = bool(left_polar)
        self.right_polar = bool(right_polar)
        self.r = 0.0
        self.s = float(shape)

        if not self.left_polar and not self.right_polar:
            self.family = AFFINE
            self.length = self.height
        elif self.left_polar and self.right_polar:
            self.family = SINE_SQUARED
            self.length = np.pi * np.sqrt(self.height / 2.0)
        else:
            self.family = MIXED
            self.r, self.length = solve_mixed_chart(self.height, self.s)
        self.y_left = float(y_left)
        self.y_right = self.y_left + self.length

        grid = np.linspace(0.0, self.length, 1001)[1:-1]
        if np.any(self.slope_local(grid) <= 0.0):
            raise ChartSolveFailure("chart derivative not positive on the open interval",
                                    interval=index)

    # local profiles
    def rise(self, t):
        if self.family == AFFINE:
            return np.asarray(t) + 0.0
        if self.family == SINE_SQUARED:
            return self.height * np.sin(np.pi * np.asarray(t) / (2.0 * self.length)) ** 2
        if self.left_polar:
            return mixed_profile(t, self.r, self.s)
        return mixed_complement(t, self.length, self.r, self.s)

    def fall(self, t):
        if self.family == AFFINE:
            return np.asarray(t) + 0.0
        if self.family == SINE_SQUARED:
            return self.height * np.sin(np.pi * np.asarray(t) / (2.0 * self.length)) ** 2
        if self.right_polar:
            return mixed_profile(t, self.r, self.s)
        return mixed_complement(t, self.length, self.r, self.s)

    def slope_local(self, t):
        t = np.asarray(t)
        if self.family == AFFINE:
            return np.ones_like(t)
        if self.family == SINE_SQUARED:
            return self.height * np.pi / (2.0 * self.length) * np.sin(np.pi * t / self.length)
        if self.left_polar:
            return mixed_slope(t, self.r, self.s)
        return mixed_slope(self.length - t, self.r, self.s)

    def slope_fall(self, t):
        """ω'(y_R - t), measured from the right end."""
        t = np.asarray(t)
        if self.family == AFFINE:
            return np.ones_like(t)
        if self.family == SINE_SQUARED:
            return self.height * np.pi / (2.0 * self.length) * np.sin(np.pi * t / self.length)
        if self.right_polar:
            return mixed_slope(t, self.r, self.s)
        return mixed_slope(self.length - t, self.r, self.s)

    # global coordinates on J
    def omega(self, y):
        t = np.asarray(y) - self.y_left
        near_left = np.real(t) <= 0.5 * self.length
        return np.where(near_left, self.u + self.rise(t), self.v - self.fall(self.length - t))

    def omega_prime(self, y):
        return self.slope_local(np.asarray(y) - self.y_left)

    def varpi(self, x):
        """Inverse chart ϖ_j on I_j (real arguments)."""
        x = np.asarray(x, dtype=float)
        offset_left = np.clip(x - self.u, 0.0, self.height)
        offset_right = np.clip(self.v - x, 0.0, self.height)
        from_left = bisect_monotone(self.rise, 0.0, self.length, offset_left)
        from_right = bisect_monotone(self.fall, 0.0, self.length, offset_right)
        t = np.where(offset_left <= offset_right, from_left, self.length - from_right)
        return self.y_left + t

    def varpi_prime(self, x):
        return 1.0 / self.omega_prime(self.varpi(x))

    def to_dict(self):
        return {
            "interval": self.index,
            "source": [self.u, self.v],
            "target": [self.y_left, self.y_right],
            "length": self.length,
            "family": self.family,
            "left_polar": self.left_polar,
            "right_polar": self.right_polar,
            "parameters": {"r": self.r, "s": self.s},
        }


@dataclass
class ChartAtlas:
    charts: List[IntervalChart]
    cuts: Tuple[float, ...]

    @property
    def lengths(self) -> List[float]:
        return [chart.length for chart in self.charts]

    def __len__(self):
        return len(self.charts)

    def __getitem__(self, j) -> IntervalChart:
        return self.charts[j]

    def locate(self, x) -> np.ndarray:
        """Index of the interval containing each x (closed on the right at b)."""
        index = np.searchsorted(np.asarray(self.cuts), np.asarray(x, dtype=float), side="right") - 1
        return np.clip(index, 0, len(self.charts) - 1)

    def varpi(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        index = self.locate(x)
        for j, chart in enumerate(self.charts):
            mask = index == j
            if np.any(mask):
                out[mask] = chart.varpi(x[mask])
        return out

    def varpi_prime(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        index = self.locate(x)
        for j, chart in enumerate(self.charts):
            mask = index == j
            if np.any(mask):
                out[mask] = chart.varpi_prime(x[mask])
        return out

    def to_dict(self):
        return {"charts": [chart.to_dict() for chart in self.charts]}


def build_atlas(partition, shape: float = 0.0) -> ChartAtlas:
    """One chart per partition interval, chosen by its endpoint polarity."""
    charts = []
    y_left = 0.0
    for j, (u, v) in enumerate(partition.intervals):
        left_polar = partition.is_polar(j, PLUS)
        right_polar = partition.is_polar(j + 1, MINUS)
        chart = IntervalChart(j, u, v, left_polar, right_polar, y_left, shape)
        charts.append(chart)
        y_left = chart.y_right
        logger.debug("Chart %d: %s, L=%.15g", j, chart.family, chart.length)
    logger.info("Chart atlas: %s", ", ".join(f"{c.family}(L={c.length:.6g})" for c in charts))
    return ChartAtlas(charts, tuple(partition.cuts))


def _fit_order(xi, defect, leading):
    """Slope of log|defect| against log ξ; inf when the defect is at rounding level."""
    magnitude = np.abs(defect)
    if np.max(magnitude) <= 1e-12 * np.max(np.abs(leading)):
        return float("inf")
    magnitude = np.maximum(magnitude, 1e-300)
    return float(np.polyfit(np.log(xi), np.log(magnitude), 1)[0])


def verify_chart_asymptotics(chart: IntervalChart, xi_range=(1e-4, 1e-2), n_samples: int = 12,
                             polar_order: float = 3.9, nonpolar_order: float = 1.9,
                             slope_order: float = 2.9, coefficient_tol: float = 1e-6,
                             slope_tol: float = 1e-10) -> Dict[str, Any]:
    """Fit the endpoint defects of a chart on a log grid.

    Polar side: ω = ω(end) ± ξ²/2 + O(ξ⁴) and ω' = ξ + O(ξ³).
    Nonpolar side: ω = ω(end) ± ξ + O(ξ²) with ω'(end) = 1.

    Raises:
        AsymptoticsViolation: any fitted order or normalization misses its threshold.
    """
    scale = min(1.0, chart.length)
    xi = np.geomspace(xi_range[0], xi_range[1], n_samples) * scale
    report = {"interval": chart.index, "family": chart.family, "sides": {}}
    failures = []
    for side, polar, profile, slope in (
            ("left", chart.left_polar, chart.rise, chart.slope_local),
            ("right", chart.right_polar, chart.fall, chart.slope_fall)):
        values = np.real(profile(xi))
        if polar:
            order = _fit_order(xi, values - 0.5 * xi ** 2, 0.5 * xi ** 2)
            derivative_order = _fit_order(xi, np.real(slope(xi)) - xi, xi)
            coefficient = float(values[0] / xi[0] ** 2)
            entry = {"polar": True, "order": order, "threshold": polar_order,
                     "coefficient": coefficient, "coefficient_tol": coefficient_tol,
                     "derivative_order": derivative_order, "derivative_threshold": slope_order}
            if order < polar_order or derivative_order < slope_order \
                    or abs(coefficient - 0.5) > coefficient_tol:
                failures.append(side)
        else:
            order = _fit_order(xi, values - xi, xi)
            end_slope = float(np.real(slope(np.array(0.0))))
            entry = {"polar": False, "order": order, "threshold": nonpolar_order,
                     "slope": end_slope, "slope_tol": slope_tol}
            if order < nonpolar_order or abs(end_slope - 1.0) > slope_tol:
                failures.append(side)
        report["sides"][side] = entry
    if failures:
        raise AsymptoticsViolation(f"chart {chart.index} fails endpoint asymptotics on {failures}",
                                   report=report)
    return report


class AffineBranch:
    """ψ(z) = slope z + offset; used for synthetic branch systems."""

    def __init__(self, slope: float, offset: float):
        self.slope = slope
        self.offset = offset

    def __call__(self, z):
        return self.slope * np.asarray(z) + self.offset

    def derivative(self, z):
        return np.full(np.shape(z), self.slope, dtype=np.result_type(np.asarray(z), float))


class BranchCorner:
    """An end e_k of J_k that ψ_jk sends to an end e_j of J_j.

    Near the corner ψ is solved in the local offsets ξ = ±(z - e_k) and
    η = ±(w - e_j) from f(x_j + s_j δ_j(η)) - f(x_j) = s_k δ_k(ξ), with the
    Taylor-shifted polynomial of f, so nothing cancels as ξ -> 0.
    """

    def __init__(self, source: IntervalChart, target: IntervalChart, source_left: bool,
                 target_left: bool, fmap, radius: float, critical: bool):
        self.s_j = 1 if source_left else -1
        self.s_k = 1 if target_left else -1
        self.source_end = source.y_left if source_left else source.y_right
        self.target_end = target.y_left if target_left else target.y_right
        self.x_j = source.u if source_left else source.v
        self.radius = float(radius)
        self.critical = bool(critical)
        self.target_profile = target.rise if target_left else target.fall
        self.target_slope = target.slope_local if target_left else target.slope_fall
        self.source_profile = source.rise if source_left else source.fall
        self.source_slope = source.slope_local if source_left else source.slope_fall

        coef = compose_polynomials(fmap.poly, Polynomial([self.x_j, 1.0])).coef.copy()
        coef[0] = 0.0
        if self.critical:
            coef[1] = 0.0
        self.lift = Polynomial(coef)
        self.lift_prime = self.lift.deriv()

        source_polar = source.left_polar if source_left else source.right_polar
        target_polar = target.left_polar if target_left else target.right_polar
        order = (2 if source_polar else 1) * (2 if self.critical else 1)
        leading = abs(coef[2] if self.critical else coef[1]) * (0.5 if source_polar else 1.0) \
            ** (2 if self.critical else 1)
        target_order = 2 if target_polar else 1
        if order != target_order:
            raise ChartSolveFailure("branch corner joins endpoints of different orders",
                                    source_end=self.source_end, target_end=self.target_end,
                                    source_order=order, target_order=target_order)
        self.slope = float(((0.5 if target_polar else 1.0) / leading) ** (1.0 / order))
        self._curvature = None

    @property
    def orientation(self) -> int:
        return self.s_j * self.s_k

    def local(self, z):
        return self.s_k * (np.asarray(z) - self.target_end)

    def solve(self, xi, steps: int = 8, iterations: int = 40):
        """η(ξ) by Newton along the ray from the corner.

        Raises:
            BranchInversionFailure: Newton leaves the root on some ray.
        """
        xi = np.asarray(xi)
        eta = np.zeros(xi.shape, dtype=np.result_type(xi, float))
        nonzero = xi != 0
        if not np.any(nonzero):
            return eta
        x = xi[nonzero]
        fractions = np.arange(1, steps + 1) / steps
        e = self.slope * fractions[0] * x
        previous = fractions[0]
        for fraction in fractions:
            e = e * (fraction / previous)
            previous = fraction
            rhs = self.s_k * self.target_profile(fraction * x)
            for _ in range(iterations):
                h = self.s_j * self.source_profile(e)
                step = (self.lift(h) - rhs) / (self.lift_prime(h) * self.s_j * self.source_slope(e))
                e = e - step
                if np.all(np.abs(step) <= 4 * EPS * np.abs(e)):
                    break
            residual = np.abs(self.lift(self.s_j * self.source_profile(e)) - rhs)
            if not np.all(np.isfinite(e)) or np.any(residual > 1e-11 * np.abs(rhs)):
                raise BranchInversionFailure("corner inversion did not converge",
                                             corner=self.target_end,
                                             max_residual=float(np.nanmax(residual / np.abs(rhs))))
        eta[nonzero] = e
        return eta

    def eta_prime(self, xi, eta):
        h = self.s_j * self.source_profile(eta)
        return self.s_k * self.target_slope(xi) / (self.lift_prime(h) * self.s_j * self.source_slope(eta))

    @property
    def curvature(self) -> float:
        """η''(0)/2 from a Cauchy integral on a circle inside the corner disk."""
        if self._curvature is None:
            rho = 0.25 * self.radius
            theta = 2.0 * np.pi * np.arange(32) / 32
            eta = self.solve(rho * np.exp(1j * theta))
            self._curvature = float(np.real(np.mean(eta * np.exp(-2j * theta)))) / rho ** 2
        return self._curvature

    def taylor(self, xi):
        """Second-order model (η, η') about the corner."""
        xi = np.asarray(xi)
        return self.slope * xi + self.curvature * xi * xi, self.slope + 2.0 * self.curvature * xi


class ConjugatedBranch:
    """ψ_jk = ϖ_j ∘ (f|I_j)^{-1} ∘ ω_k on J_k, extended holomorphically.

    Real arguments are inverted by bisection of f∘ω_j on J_j. Points within
    ``corner_fraction`` L_k of a corner are solved in local offsets; other
    complex points are continued from a real anchor by Newton steps along a
    path kept away from the corners.
    """

    continuation_steps = 16
    newton_iterations = 40
    corner_fraction = 0.3
    taylor_window = 1e-3
    exact_zone = 1e-7

    def __init__(self, source: IntervalChart, target: IntervalChart, sign: int, fmap):
        self.source = source
        self.target = target
        self.sign = sign
        self.fmap = fmap
        self.corners = self._find_corners()

    def _find_corners(self) -> List[BranchCorner]:
        a, b = self.fmap.domain
        tol = 1e-9 * max(1.0, b - a)
        corners = []
        for target_left in (True, False):
            source_left = target_left if self.sign > 0 else not target_left
            x_j = self.source.u if source_left else self.source.v
            x_k = self.target.u if target_left else self.target.v
            mismatch = abs(float(self.fmap(x_j)) - x_k)
            if mismatch > tol:
                continue
            critical = abs(x_j - self.fmap.critical_point) <= tol
            corners.append(BranchCorner(self.source, self.target, source_left, target_left,
                                        self.fmap, self.corner_fraction * self.target.length, critical))
            logger.debug("Corner of edge (%d,%d) at %s end, f mismatch %.2g", self.source.index,
                         self.target.index, "left" if target_left else "right", mismatch)
        return corners

    def _lift(self, w):
        return self.fmap(self.source.omega(w))

    def _lift_prime(self, w):
        return self.fmap.derivative(self.source.omega(w)) * self.source.omega_prime(w)

    def _real(self, z):
        x = np.real(self.target.omega(z))
        return bisect_monotone(lambda w: np.real(self._lift(w)), self.source.y_left,
                               self.source.y_right, x, increasing=self.sign > 0)

    def _corner_masks(self, z):
        handled = np.zeros(z.shape, dtype=bool)
        for corner in self.corners:
            inside = (np.abs(corner.local(z)) <= corner.radius) & ~handled
            handled |= inside
            yield corner, inside

    def _newton(self, w, zs):
        target = self.target.omega(zs)
        scale = max(1.0, self.source.length)
        for _ in range(self.newton_iterations):
            correction = (self._lift(w) - target) / self._lift_prime(w)
            w = w - correction
            if np.all(np.abs(correction) <= 1e-15 * scale):
                break
        residual = np.abs(self._lift(w) - target)
        if not np.all(np.isfinite(w)) or np.any(residual > 1e-10 * max(1.0, np.max(np.abs(target)))):
            raise BranchInversionFailure(
                f"branch inversion for edge ({self.source.index},{self.target.index}) "
                "did not converge", max_residual=float(np.nanmax(residual)))
        return w

    def _continue(self, z):
        """Anchor on the real segment, rise to a detour height, move across, descend."""
        lo, hi = self.target.y_left, self.target.y_right
        pad = {corner.s_k: 0.5 * corner.radius for corner in self.corners}
        anchor = np.clip(np.real(z), lo + pad.get(1, 0.0), hi - pad.get(-1, 0.0))
        detour = 0.5 * self.corner_fraction * self.target.length
        direction = np.where(np.imag(z) < 0.0, -1.0, 1.0)
        moved = anchor != np.real(z)
        height = np.where(moved, direction * np.maximum(np.abs(np.imag(z)), detour), np.imag(z))
        waypoints = [anchor + 0j, anchor + 1j * height, np.real(z) + 1j * height, z]
        w = self._real(anchor).astype(complex)
        for start, end in zip(waypoints[:-1], waypoints[1:]):
            if np.all(start == end):
                continue
            for step in range(1, self.continuation_steps + 1):
                w = self._newton(w, start + (step / self.continuation_steps) * (end - start))
        return w

    def __call__(self, z):
        z = np.asarray(z)
        shape = z.shape
        z = np.atleast_1d(z)
        complex_input = np.iscomplexobj(z)
        if not complex_input:
            z = np.clip(z.astype(float), self.target.y_left, self.target.y_right)
        out = np.empty(z.shape, dtype=complex if complex_input else float)
        rest = np.ones(z.shape, dtype=bool)
        for corner, inside in self._corner_masks(z):
            if np.any(inside):
                out[inside] = corner.source_end + corner.s_j * corner.solve(corner.local(z[inside]))
                rest &= ~inside
        real = rest & (np.imag(z) == 0.0) & (np.real(z) >= self.target.y_left) \
            & (np.real(z) <= self.target.y_right)
        if np.any(real):
            out[real] = self._real(np.real(z[real]))
        other = rest & ~real
        if np.any(other):
            out[other] = self._continue(z[other].astype(complex))
        return out.reshape(shape)

    def derivative(self, z):
        """ψ'_jk(z) = ω_k'(z) / (f'(ω_j(ψ)) ω_j'(ψ)); corner offsets and the Taylor model at the corners.

        Raises:
            SingularEvaluation: the denominator vanishes away from every corner.
        """
        z = np.asarray(z)
        shape = z.shape
        z = np.atleast_1d(z)
        if not np.iscomplexobj(z):
            z = np.clip(z.astype(float), self.target.y_left, self.target.y_right)
        out = np.empty(z.shape, dtype=complex if np.iscomplexobj(z) else float)
        rest = np.ones(z.shape, dtype=bool)
        zone = self.exact_zone * self.target.length
        for corner, inside in self._corner_masks(z):
            if not np.any(inside):
                continue
            xi = corner.local(z[inside])
            values = np.empty(xi.shape, dtype=out.dtype)
            near = np.abs(xi) <= zone
            if np.any(near):
                values[near] = corner.taylor(xi[near])[1]
            if np.any(~near):
                values[~near] = corner.eta_prime(xi[~near], corner.solve(xi[~near]))
            out[inside] = corner.orientation * values
            rest &= ~inside
        if np.any(rest):
            w = self(z[rest])
            numerator = self.target.omega_prime(z[rest])
            denominator = self._lift_prime(w)
            if np.any(denominator == 0.0):
                raise SingularEvaluation(
                    f"vanishing branch denominator away from the corners of J_{self.target.index}",
                    points=z[rest][denominator == 0.0])
            out[rest] = numerator / denominator
        return out.reshape(shape)

    def taylor(self, z):
        """(ψ, ψ') from the second-order corner model.

        Raises:
            SingularEvaluation: some z lies outside the ``taylor_window`` band
                about a corner end.
        """
        z = np.atleast_1d(np.asarray(z))
        window = self.taylor_window * self.target.length
        values = np.empty(z.shape, dtype=np.result_type(z, float))
        slopes = np.empty_like(values)
        covered = np.zeros(z.shape, dtype=bool)
        for corner in self.corners:
            xi = corner.local(z)
            inside = (np.abs(xi) <= window) & ~covered
            if np.any(inside):
                eta, eta_prime = corner.taylor(xi[inside])
                values[inside] = corner.source_end + corner.s_j * eta
                slopes[inside] = corner.orientation * eta_prime
                covered |= inside
        if not np.all(covered):
            raise SingularEvaluation(
                f"Taylor model requested outside its window on J_{self.target.index}",
                window=window, points=z[~covered])
        return values, slopes


@dataclass
class BranchSystem:
    """Inverse branches ψ_jk for all edges j ≻ k plus their signs."""

    lengths: Tuple[float, ...]
    branches: Dict[Tuple[int, int], Any]
    signs: Dict[Tuple[int, int], int]
    atlas: Optional[ChartAtlas] = None
    fmap: Any = None
    offsets: Tuple[float, ...] = field(init=False)

    def __post_init__(self):
        self.offsets = tuple(np.concatenate([[0.0], np.cumsum(self.lengths)[:-1]]))

    @property
    def m(self) -> int:
        return len(self.lengths)

    @property
    def edges(self) -> List[Tuple[int, int]]:
        return sorted(self.branches)

    def incoming(self, k: int) -> List[int]:
        return [j for (j, kk) in self.edges if kk == k]

    def interval(self, k: int) -> Tuple[float, float]:
        return self.offsets[k], self.offsets[k] + self.lengths[k]

    def conjugated_map(self, j: int, k: int, w):
        """g(w) = ϖ_k(f(ω_j(w))) for w in J_j with image in I_k."""
        return self.atlas[k].varpi(np.real(self.fmap(self.atlas[j].omega(w))))

    @classmethod
    def synthetic(cls, lengths: Sequence[float], branches: Dict[Tuple[int, int], Any],
                  signs: Dict[Tuple[int, int], int]):
        return cls(tuple(lengths), dict(branches), dict(signs))


def conjugated_branches(atlas: ChartAtlas, partition, graph, fmap) -> BranchSystem:
    """Build ψ_jk for every covering edge j ≻ k."""
    branches, signs = {}, {}
    for j, k in graph.edges:
        sign = graph.signs[j]
        branches[(j, k)] = ConjugatedBranch(atlas[j], atlas[k], sign, fmap)
        signs[(j, k)] = sign
    logger.info("Conjugated branch system with %d edges", len(branches))
    return BranchSystem(tuple(atlas.lengths), branches, signs, atlas=atlas, fmap=fmap)


def stadium_boundary(y_left: float, y_right: float, radius: float, n_points: int = 512) -> np.ndarray:
    """Equally spaced points on the boundary of the radius-neighborhood of [y_left, y_right]."""
    length = y_right - y_left
    perimeter = 2.0 * length + 2.0 * np.pi * radius
    s = np.arange(n_points) * perimeter / n_points
    points = np.empty(n_points, dtype=complex)
    arc = np.pi * radius
    for i, si in enumerate(s):
        if si < length:
            points[i] = y_left + si - 1j * radius
        elif si < length + arc:
            theta = -np.pi / 2 + (si - length) / radius
            points[i] = y_right + radius * np.exp(1j * theta)
        elif si < 2 * length + arc:
            points[i] = y_right - (si - length - arc) + 1j * radius
        else:
            theta = np.pi / 2 + (si - 2 * length - arc) / radius
            points[i] = y_left + radius * np.exp(1j * theta)
    return points


def stadium_quadrature(y_left: float, y_right: float, radius: float,
                       order: int = 24) -> Tuple[np.ndarray, np.ndarray]:
    """Counterclockwise Gauss-Legendre nodes z and weights dz on the stadium boundary.

    Straight sides are split into panels no longer than ``radius``.
    """
    t, w = legendre.leggauss(order)
    length = y_right - y_left
    panels = max(1, int(np.ceil(length / radius)))
    edges = np.linspace(0.0, length, panels + 1)
    mid = (0.5 * (edges[:-1] + edges[1:]))[:, None]
    half = 0.5 * np.diff(edges)[:, None]
    s = (mid + half * t).ravel()
    ds = (half * w).ravel()
    theta = 0.5 * np.pi * t
    dtheta = 0.5 * np.pi * w
    right = y_right + radius * np.exp(1j * theta)
    left = y_left + radius * np.exp(1j * (theta + np.pi))
    nodes = np.concatenate([y_left + s - 1j * radius, right, y_right - s + 1j * radius, left])
    weights = np.concatenate([ds + 0j, 1j * (right - y_right) * dtheta,
                              -ds + 0j, 1j * (left - y_left) * dtheta])
    return nodes, weights


def holomorphy_defect(branch, y_left: float, y_right: float, radius: float) -> float:
    """|Cauchy integral of ψ over the stadium boundary minus ψ at the centre|."""
    nodes, weights = stadium_quadrature(y_left, y_right, radius)
    center = 0.5 * (y_left + y_right)
    integral = np.sum(branch(nodes) * weights / (nodes - center)) / (2j * np.pi)
    return float(abs(integral - branch(np.array([center]))[0]))


def _distance_to_segment(w, y_left, y_right):
    return np.abs(w - np.clip(np.real(w), y_left, y_right))


def assumption_margin(branches: BranchSystem, epsilon: float, n_points: int = 512,
                      holomorphy_tol: float = 1e-8) -> Dict[str, Any]:
    """Margin of ψ_jk(∂U_k) inside U_j for stadia of radius epsilon·L_k.

    An edge whose continued ψ fails the Cauchy integral test on ∂U_k has a
    singularity inside U_k; its margin is the negated defect.
    """
    per_edge, defects = {}, {}
    for (j, k) in branches.edges:
        branch = branches.branches[(j, k)]
        y_left, y_right = branches.interval(k)
        radius = epsilon * branches.lengths[k]
        boundary = stadium_boundary(y_left, y_right, radius, n_points)
        try:
            images = branch(boundary)
            defect = holomorphy_defect(branch, y_left, y_right, radius)
        except BranchInversionFailure:
            per_edge[(j, k)] = float("-inf")
            continue
        source_left, source_right = branches.interval(j)
        distance = _distance_to_segment(images, source_left, source_right)
        margin = float(np.min(epsilon * branches.lengths[j] - distance))
        defects[(j, k)] = defect
        if not defect <= holomorphy_tol * max(1.0, branches.lengths[j]):
            margin = min(margin, -defect) if np.isfinite(defect) else float("-inf")
        per_edge[(j, k)] = margin
    return {"epsilon": epsilon, "margin": min(per_edge.values()), "edges": per_edge,
            "holomorphy_defects": defects}


def verify_assumption_A(branches: BranchSystem, epsilon: float = 0.15, search: bool = True,
                        n_points: int = 512, n_search: int = 12) -> Dict[str, Any]:
    """Check ψ_jk(Ū_k) ⊂ U_j on sampled stadium boundaries, with ψ_jk holomorphic inside.

    Args:
        epsilon: Stadium radius as a fraction of each L_k.
        search: Retry on a decreasing logarithmic grid when the margin is not positive.

    Raises:
        AssumptionAUnverified: no tried epsilon yields a positive margin.
    """
    candidates = [epsilon]
    if search:
        candidates += list(epsilon * np.geomspace(0.5, 0.5 ** n_search, n_search))
    result = None
    for candidate in candidates:
        result = assumption_margin(branches, candidate, n_points)
        if result["margin"] > 0.0:
            break
        logger.debug("Assumption A margin %.3g at epsilon=%.4g", result["margin"], candidate)
    else:
        raise AssumptionAUnverified("no epsilon in the search grid gives a positive margin",
                                    epsilon=epsilon, margin=result["margin"])

    contraction = 0.0
    for (j, k), branch in branches.branches.items():
        y_left, y_right = branches.interval(k)
        grid = np.linspace(y_left, y_right, 102)[1:-1]
        contraction = max(contraction, float(np.max(np.abs(branch.derivative(grid)))))
    logger.info("Assumption A verified: epsilon=%.4g margin=%.4g max|psi'|=%.4g",
                result["epsilon"], result["margin"], contraction)
    return {
        "epsilon": result["epsilon"],
        "requested_epsilon": epsilon,
        "margin": result["margin"],
        "edges": [{"edge": list(e), "margin": v} for e, v in sorted(result["edges"].items())],
        "max_real_contraction": contraction,
        "max_holomorphy_defect": max(result["holomorphy_defects"].values(), default=0.0),
        "boundary_points": n_points,
    }
