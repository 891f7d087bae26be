"""
Periodic orbits of the Markov system and the dynamical determinant
det(1 - z𝓛) = exp(-Σ_{n≥1} zⁿ tr♭𝓛ⁿ / n), evaluated in extended precision.

Each closed path k_0 -> k_1 -> ... -> k_{n-1} -> k_0 of the covering graph
fixes exactly one point of the conjugated system. Inside an interval its
chart multiplier is 1/(fⁿ)'. On a polar side, which only an increasing
branch can fix, the chart square root halves the exponent: (fⁿ)'^{-1/2}.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from mpmath import mp, mpf

from .errors import ConfigError, EigensolveFailure
from .map_model import MINUS, PLUS, bisect_monotone

logger = logging.getLogger(__name__)

MAX_PATHS = 200_000


@dataclass(frozen=True)
class PeriodicPoint:
    """Fixed point of the branch of fⁿ selected by ``path``."""

    path: Tuple[int, ...]
    x: Any
    derivative: Any
    side: Optional[Tuple[int, str]]
    polar: bool
    chart_multiplier: Any

    @property
    def period(self) -> int:
        return len(self.path)

    @property
    def trace_term(self):
        """|m| / (1 - m), the contribution to tr♭𝓛ⁿ."""
        m = self.chart_multiplier
        return abs(m) / (1 - m)

    def to_dict(self):
        return {"path": list(self.path), "x": float(self.x), "derivative": float(self.derivative),
                "side": list(self.side) if self.side else None, "polar": self.polar,
                "chart_multiplier": float(self.chart_multiplier)}


def path_count(adjacency: np.ndarray, n: int) -> int:
    return int(np.trace(np.linalg.matrix_power(np.asarray(adjacency, dtype=np.int64), n)))


def closed_paths(adjacency: np.ndarray, n: int) -> List[Tuple[int, ...]]:
    """All closed paths of length n, each listed from its own starting vertex."""
    adjacency = np.asarray(adjacency)
    paths = []

    def extend(path):
        if len(path) == n:
            if adjacency[path[-1], path[0]]:
                paths.append(tuple(path))
            return
        for k in np.nonzero(adjacency[path[-1]])[0]:
            extend(path + [int(k)])

    for start in range(adjacency.shape[0]):
        extend([start])
    return paths


def _pull_back(fmap, partition, signs, ks, y):
    out = np.empty_like(y)
    for k in np.unique(ks):
        mask = ks == k
        u, v = partition.intervals[k]
        out[mask] = bisect_monotone(fmap, u, v, y[mask], increasing=signs[k] > 0)
    return out


def seed_points(fmap, partition, signs, paths: Sequence[Tuple[int, ...]], max_cycles: int = 80,
                tol: float = 1e-14) -> np.ndarray:
    """Float64 fixed points by iterating the inverse branches around each path."""
    paths = np.asarray(paths, dtype=int)
    cuts = np.asarray(partition.cuts)
    x = 0.5 * (cuts[paths[:, 0]] + cuts[paths[:, 0] + 1])
    for _ in range(max_cycles):
        previous = x
        for i in range(paths.shape[1] - 1, -1, -1):
            x = _pull_back(fmap, partition, signs, paths[:, i], x)
        if np.max(np.abs(x - previous)) <= tol:
            break
    return x


class _MapIterate:
    """fⁿ and (fⁿ)' in mpmath arithmetic."""

    def __init__(self, fmap):
        self.coeffs = [mpf(float(c)) for c in fmap.poly.coef[::-1]]

    def __call__(self, x, n: int):
        derivative = mpf(1)
        for _ in range(n):
            x, slope = mp.polyval(self.coeffs, x, derivative=True)
            derivative *= slope
        return x, derivative


def _polish(iterate: _MapIterate, seed: float, n: int, iterations: int = 30):
    x = mpf(float(seed))
    for _ in range(iterations):
        value, derivative = iterate(x, n)
        step = (value - x) / (derivative - 1)
        x -= step
        if abs(step) <= 4 * mp.eps * max(1, abs(x)):
            break
    return x, iterate(x, n)[1]


def periodic_points(fmap, partition, graph, n: int, dps: int = 60,
                    side_tol: float = 1e-10) -> List[PeriodicPoint]:
    """Periodic points of period dividing n, one per closed path of length n.

    Raises:
        ConfigError: the number of closed paths exceeds ``MAX_PATHS``.
        EigensolveFailure: a polished point leaves its cylinder, or an
            orientation reversing branch fixes a polar side.
    """
    count = path_count(graph.adjacency, n)
    if count > MAX_PATHS:
        raise ConfigError("too many closed paths for the cycle expansion", n=n, count=count)
    paths = closed_paths(graph.adjacency, n)
    seeds = seed_points(fmap, partition, graph.signs, paths)
    scale = max(1.0, fmap.domain[1] - fmap.domain[0])
    points = []
    with mp.workdps(dps):
        iterate = _MapIterate(fmap)
        for path, seed in zip(paths, seeds):
            x, derivative = _polish(iterate, seed, n)
            y = x
            for k in path:
                u, v = partition.intervals[k]
                if not u - side_tol * scale <= y <= v + side_tol * scale:
                    raise EigensolveFailure("periodic point left its cylinder", path=path,
                                            x=float(x))
                y = iterate(y, 1)[0]
            u, v = partition.intervals[path[0]]
            side = None
            if abs(x - u) <= side_tol * scale:
                side = (path[0], PLUS)
            elif abs(x - v) <= side_tol * scale:
                side = (path[0] + 1, MINUS)
            polar = side is not None and partition.is_polar(*side)
            if polar:
                if derivative <= 0:
                    raise EigensolveFailure("orientation reversing branch fixes a polar side",
                                            path=path, derivative=float(derivative))
                multiplier = 1 / mp.sqrt(derivative)
            else:
                multiplier = 1 / derivative
            points.append(PeriodicPoint(path, x, derivative, side, polar, multiplier))
    return points


def determinant_coefficients(traces) -> List[Any]:
    """Taylor coefficients of exp(-Σ zⁿ tₙ/n) by Newton's identities."""
    coefficients = [mpf(1)]
    for n in range(1, len(traces) + 1):
        coefficients.append(-mp.fsum(traces[k - 1] * coefficients[n - k] for k in range(1, n + 1)) / n)
    return coefficients


def determinant_eigenvalues(traces) -> List[Any]:
    """Reciprocal zeros of the truncated determinant, by decreasing modulus.

    Raises:
        EigensolveFailure: the polynomial root finder does not converge.
    """
    coefficients = determinant_coefficients(traces)
    while len(coefficients) > 1 and coefficients[-1] == 0:
        coefficients.pop()
    if len(coefficients) < 2:
        return []
    try:
        roots = mp.polyroots(coefficients[::-1], maxsteps=max(400, 40 * len(coefficients)),
                             extraprec=4 * mp.dps)
    except mp.NoConvergence as exc:
        raise EigensolveFailure(f"determinant roots did not converge: {exc}") from exc
    values = [1 / z for z in roots if z != 0]
    return sorted(values, key=lambda mu: -abs(mu))


@dataclass
class CycleExpansion:
    """Flat traces and determinant eigenvalues up to period ``order``."""

    order: int
    dps: int
    points: Dict[int, List[PeriodicPoint]]
    traces: List[Any]
    eigenvalues: List[complex]
    truncation_deltas: List[float]
    leading_eigenvalue: complex

    def flat_trace(self, n: int) -> float:
        return float(self.traces[n - 1])

    def leading(self, n_keep: int) -> np.ndarray:
        return np.array(self.eigenvalues[:n_keep], dtype=complex)

    def to_dict(self):
        return {
            "order": self.order,
            "precision_digits": self.dps,
            "flat_traces": [float(t) for t in self.traces],
            "eigenvalues": [complex(mu) for mu in self.eigenvalues],
            "truncation_deltas": self.truncation_deltas,
            "leading_eigenvalue": self.leading_eigenvalue,
            "orbit_counts": {n: len(p) for n, p in self.points.items()},
            "fixed_points": [p.to_dict() for p in self.points.get(1, [])],
        }


def cycle_expansion(fmap, partition, graph, order: int = 10, dps: int = 60,
                    n_keep: int = 4) -> CycleExpansion:
    """Eigenvalues of 𝓛 from periodic orbits of period <= ``order``.

    The known eigenvalue 1 is deflated (tₙ - 1) before the remaining zeros
    are found; the undeflated determinant supplies the check on μ₀. Orders
    ``order`` and ``order - 1`` are compared for ``truncation_deltas``.

    Raises:
        ConfigError: ``order`` below 3 or too many closed paths.
        EigensolveFailure: see :func:`periodic_points` and
            :func:`determinant_eigenvalues`.
    """
    if order < 3:
        raise ConfigError("cycle expansion order must be at least 3", order=order)
    points = {n: periodic_points(fmap, partition, graph, n, dps) for n in range(1, order + 1)}
    with mp.workdps(dps):
        traces = [mp.fsum(p.trace_term for p in points[n]) for n in range(1, order + 1)]
        deflated = [t - 1 for t in traces]
        full = determinant_eigenvalues(traces)
        leading = complex(min(full, key=lambda mu: abs(mu - 1))) if full else complex("nan")
        rest = determinant_eigenvalues(deflated)
        coarse = determinant_eigenvalues(deflated[:-1])
        eigenvalues = [complex(1.0)] + [complex(mu) for mu in rest]
        deltas = [0.0]
        for mu in rest[:max(n_keep - 1, 0)]:
            deltas.append(float(min(abs(mu - nu) for nu in coarse)) if coarse else float("inf"))
    logger.info("Cycle expansion to period %d: %d periodic points, eigenvalues %s", order,
                sum(len(p) for p in points.values()),
                ", ".join(f"{mu.real:.12g}" for mu in eigenvalues[:n_keep]))
    return CycleExpansion(order, dps, points, traces, eigenvalues, deltas, leading)
