"""
Unimodal interval maps: critical point, postcritical orbit, Markov partition,
covering graph and polarity of the partition endpoints.
"""
import logging
from dataclasses import dataclass, field, replace
from math import gcd
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from .errors import (ConfigError, DomainMismatch, NoSignChange, NotMarkov,
                     NotMixing, NotRepelling, OrbitNotFinite,
                     UnstableClassification)

logger = logging.getLogger(__name__)

# Side labels of a doubled endpoint: the right end of the interval to the left
# of a cut point is its "-" side, the left end of the interval to its right
# is its "+" side.
MINUS = "-"
PLUS = "+"

EPS = np.finfo(float).eps


def band_merging_parameter():
    """Real root of l^3 - 2 l^2 - 4 l - 8 = 0 (logistic two-band merging)."""
    roots = np.roots([1.0, -2.0, -4.0, -8.0])
    lam = float(roots[np.argmin(np.abs(roots.imag))].real)
    for _ in range(3):
        lam -= (lam ** 3 - 2 * lam ** 2 - 4 * lam - 8) / (3 * lam ** 2 - 4 * lam - 4)
    return lam


def compose_polynomials(outer: Polynomial, inner: Polynomial) -> Polynomial:
    """Return outer(inner(x)) by Horner's scheme in polynomial arithmetic."""
    result = Polynomial([outer.coef[-1]])
    for coefficient in outer.coef[-2::-1]:
        result = result * inner + coefficient
    return result


def bisect_monotone(func, lo, hi, targets, increasing=True, iterations=200):
    """Vectorized bisection for func(x) = target on [lo, hi], func monotone.

    Args:
        func: Vectorized real function.
        lo, hi: Bracket (scalars or arrays broadcastable to targets).
        targets: Right-hand sides.
        increasing: Monotonicity of func on the bracket.

    Returns:
        Array of solutions, accurate to a few ulps of the bracket.
    """
    targets = np.asarray(targets, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), targets.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), targets.shape).copy()
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        values = func(mid)
        below = values < targets if increasing else values > targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 4 * EPS * np.maximum(1.0, np.abs(mid))):
            break
    return 0.5 * (lo + hi)


class AnalyticMap:
    """A real polynomial unimodal map f: [a, b] -> [a, b].

    Coefficients are ascending (numpy.polynomial convention). The map is
    evaluated through numpy.polynomial so complex arguments work unchanged.
    """

    def __init__(self, coeffs: Sequence[float], domain: Sequence[float],
                 family: str = "polynomial",
                 parameters: Optional[Dict[str, Any]] = None,
                 endpoint_tol: float = 1e-12):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim != 1 or len(coeffs) < 3:
            raise ConfigError("map polynomial must have degree >= 2", coeffs=coeffs)
        a, b = float(domain[0]), float(domain[1])
        if not a < b:
            raise ConfigError("map domain must satisfy a < b", a=a, b=b)
        self.family = family
        self.parameters = dict(parameters or {})
        self.domain = (a, b)
        self.endpoint_tol = endpoint_tol
        self.poly = Polynomial(coeffs)
        self.dpoly = self.poly.deriv()
        self.d2poly = self.poly.deriv(2)

        self.critical_point = find_critical_point(self)
        self._check_domain()

    # construction helpers
    @classmethod
    def logistic(cls, lam: float):
        """f(x) = lam x (1 - x) restricted to [f^2(c), f(c)]."""
        lam = float(lam)
        if not 2.0 < lam <= 4.0:
            raise ConfigError("logistic parameter must lie in (2, 4]", lam=lam)
        poly = Polynomial([0.0, lam, -lam])
        c = 0.5
        b = float(poly(c))
        a = float(poly(b))
        return cls(poly.coef, (a, b), family="logistic",
                   parameters={"lambda": lam})

    @classmethod
    def from_config(cls, spec: Dict[str, Any]):
        """Build a map from its JSON description.

        Accepts {"family": "logistic", "lambda": 4.0} (the string
        "band_merging" selects the two-band merging parameter) or
        {"family": "polynomial", "coeffs": [...], "domain": [a, b]}.
        """
        if not isinstance(spec, dict) or "family" not in spec:
            raise ConfigError("map spec needs a 'family' field", spec=spec)
        family = spec["family"]
        if family == "logistic":
            lam = spec.get("lambda")
            if lam == "band_merging":
                lam = band_merging_parameter()
            if lam is None:
                raise ConfigError("logistic map needs 'lambda'")
            return cls.logistic(float(lam))
        if family == "polynomial":
            if "coeffs" not in spec or "domain" not in spec:
                raise ConfigError("polynomial map needs 'coeffs' and 'domain'")
            return cls(spec["coeffs"], spec["domain"],
                       endpoint_tol=float(spec.get("endpoint_tol", 1e-12)))
        raise ConfigError(f"unknown map family {family!r}")

    def iterate_map(self, power: int, domain: Sequence[float]):
        """Return f^power restricted to ``domain`` as a new AnalyticMap."""
        poly = self.poly
        for _ in range(power - 1):
            poly = compose_polynomials(self.poly, poly)
        parameters = dict(self.parameters)
        parameters.update({"base_family": self.family, "iterate": power})
        return AnalyticMap(poly.coef, domain, family="band_return",
                           parameters=parameters, endpoint_tol=1e-9)

    # evaluation
    def __call__(self, x):
        return self.poly(x)

    def derivative(self, x):
        return self.dpoly(x)

    def second_derivative(self, x):
        return self.d2poly(x)

    def iterate(self, x, n: int):
        """Return (f^n(x), (f^n)'(x))."""
        x = np.asarray(x)
        derivative = np.ones_like(x)
        for _ in range(n):
            derivative = derivative * self.dpoly(x)
            x = self.poly(x)
        return x, derivative

    def _check_domain(self):
        a, b = self.domain
        c = self.critical_point
        scale = max(1.0, b - a)
        fc = float(self(c))
        f2c = float(self(fc))
        if abs(fc - b) > self.endpoint_tol * scale or abs(f2c - a) > self.endpoint_tol * scale:
            raise DomainMismatch(
                "domain must be [f^2(c), f(c)]", a=a, b=b, f_c=fc, f2_c=f2c)
        grid = np.linspace(a, b, 4001)
        values = self(grid)
        slack = 1e-9 * scale
        if values.min() < a - slack or values.max() > b + slack:
            raise DomainMismatch("f does not map [a, b] into itself",
                                 min=values.min(), max=values.max())

    def to_dict(self):
        return {
            "family": self.family,
            "parameters": {k: v for k, v in self.parameters.items()},
            "coeffs": [float(v) for v in self.poly.coef],
            "domain": [self.domain[0], self.domain[1]],
            "critical_point": self.critical_point,
        }

    def __repr__(self):
        return f"AnalyticMap(family={self.family!r}, domain={self.domain})"


def find_critical_point(fmap: AnalyticMap, tol: float = 1e-14, max_iter: int = 200) -> float:
    """Locate the turning point c by bisection-safeguarded Newton on f'.

    Raises:
        NoSignChange: f' does not change sign exactly once on the domain,
            or the turning point is degenerate.
    """
    a, b = fmap.domain
    d_lo, d_hi = float(fmap.derivative(a)), float(fmap.derivative(b))
    if not (d_lo > 0.0 and d_hi < 0.0):
        raise NoSignChange("f' must be positive at a and negative at b",
                           f_prime_a=d_lo, f_prime_b=d_hi)
    signs = np.sign(fmap.derivative(np.linspace(a, b, 4001)))
    signs = signs[signs != 0]
    if np.count_nonzero(np.diff(signs)) != 1:
        raise NoSignChange("f' changes sign more than once (map not unimodal)")

    lo, hi = a, b
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        d = float(fmap.derivative(x))
        if d == 0.0:
            break
        if d > 0.0:
            lo = x
        else:
            hi = x
        dd = float(fmap.second_derivative(x))
        x_new = x - d / dd if dd != 0.0 else 0.5 * (lo + hi)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 2 * EPS * max(1.0, abs(x)):
            x = x_new
            break
        x = x_new

    # f' is only known to the rounding level of its own coefficients
    rounding = 64 * EPS * float(np.sum(np.abs(fmap.dpoly.coef))) * max(1.0, abs(x)) ** len(fmap.dpoly.coef)
    if abs(float(fmap.derivative(x))) > max(tol * max(1.0, abs(d_lo), abs(d_hi)), rounding):
        raise NoSignChange("Newton did not reach f'(c) = 0", residual=float(fmap.derivative(x)))
    if not float(fmap.second_derivative(x)) < 0.0:
        raise NoSignChange("critical point is not a nondegenerate maximum")
    return x


@dataclass(frozen=True)
class PostcriticalOrbit:
    """Forward orbit p_1 = f(c), p_2, ... of the critical point."""

    points: Tuple[float, ...]
    preperiod: int
    period: int
    critical_point: float
    tol: float

    @property
    def m(self) -> int:
        return len(self.points)

    @property
    def cycle(self) -> Tuple[float, ...]:
        return self.points[self.preperiod:]

    def index_of_iterate(self, n: int) -> int:
        """Index in ``points`` of f^n(c), n >= 1."""
        i = n - 1
        if i < self.preperiod + self.period:
            return i
        return self.preperiod + (i - self.preperiod) % self.period

    def to_dict(self):
        return {
            "points": list(self.points),
            "preperiod": self.preperiod,
            "period": self.period,
            "critical_point": self.critical_point,
            "tolerance": self.tol,
        }


def postcritical_orbit(fmap: AnalyticMap, max_iter: int = 10000, tol: float = 1e-10) -> PostcriticalOrbit:
    """Iterate the critical value until it recurs, then snap the cycle.

    Raises:
        OrbitNotFinite: no recurrence within ``max_iter`` iterations.
        NotRepelling: the postcritical cycle is not strictly repelling.
    """
    if tol <= 0:
        raise ConfigError("orbit tolerance must be positive", tol=tol)
    c = fmap.critical_point
    a, b = fmap.domain
    scale = max(1.0, b - a)
    history = np.empty(max_iter + 1)
    history[0] = float(fmap(c))
    count = 1
    preperiod = period = None
    for _ in range(max_iter):
        x = float(fmap(history[count - 1]))
        distances = np.abs(history[:count] - x)
        i = int(np.argmin(distances))
        if distances[i] <= tol * scale:
            preperiod, period = i, count - i
            break
        history[count] = x
        count += 1
    if preperiod is None:
        raise OrbitNotFinite(
            f"no recurrence of the critical orbit within {max_iter} iterations",
            max_iter=max_iter, tol=tol)

    points = [float(v) for v in history[:count]]
    cycle = _refine_cycle(fmap, points[preperiod], period)
    points[preperiod:] = cycle

    multiplier = float(fmap.iterate(cycle[0], period)[1])
    if abs(multiplier) <= 1.0 + 1e-6:
        raise NotRepelling("postcritical cycle is not strictly repelling",
                           multiplier=multiplier)
    logger.info("Postcritical orbit: %d points, preperiod %d, period %d, cycle multiplier %.6g",
                len(points), preperiod, period, multiplier)
    return PostcriticalOrbit(tuple(points), preperiod, period, c, tol)


def _refine_cycle(fmap: AnalyticMap, seed: float, period: int) -> List[float]:
    x = seed
    for _ in range(60):
        value, derivative = fmap.iterate(x, period)
        step = (float(value) - x) / (float(derivative) - 1.0)
        x -= step
        if abs(step) <= 2 * EPS * max(1.0, abs(x)):
            break
    cycle = [x]
    for _ in range(period - 1):
        cycle.append(float(fmap(cycle[-1])))
    residual = abs(float(fmap(cycle[-1])) - x)
    if residual > 1e-14 * max(1.0, abs(x)) * 10:
        logger.warning("Cycle refinement residual %.3g exceeds 1e-13", residual)
    return cycle


@dataclass(frozen=True)
class MarkovPartition:
    """Subintervals I_j = [cuts[j], cuts[j+1]] with doubled endpoints.

    ``polarity`` maps (cut index, side) to True for polar sides; it is empty
    until :func:`classify_polarity` has run.
    """

    cuts: Tuple[float, ...]
    critical_index: int
    point_index: Dict[int, int]
    polarity: Dict[Tuple[int, str], bool] = field(default_factory=dict)
    mixed_joins: Tuple[int, ...] = ()

    @property
    def m(self) -> int:
        return len(self.cuts) - 1

    @property
    def intervals(self) -> List[Tuple[float, float]]:
        return [(self.cuts[j], self.cuts[j + 1]) for j in range(self.m)]

    def sides(self) -> List[Tuple[int, str]]:
        """All doubled endpoints as (cut index, side)."""
        result = [(0, PLUS)]
        for i in range(1, len(self.cuts) - 1):
            result.extend([(i, MINUS), (i, PLUS)])
        result.append((len(self.cuts) - 1, MINUS))
        return result

    @staticmethod
    def interval_of_side(cut_index: int, side: str) -> int:
        return cut_index - 1 if side == MINUS else cut_index

    def endpoint_sides(self, j: int) -> Tuple[Tuple[int, str], Tuple[int, str]]:
        """(left, right) doubled endpoints of interval j."""
        return (j, PLUS), (j + 1, MINUS)

    def is_polar(self, cut_index: int, side: str) -> bool:
        return bool(self.polarity.get((cut_index, side), False))

    def to_dict(self):
        flags = [{"cut_index": i, "point": self.cuts[i], "side": side,
                  "polar": self.is_polar(i, side)} for i, side in self.sides()]
        return {
            "cut_points": list(self.cuts),
            "critical_index": self.critical_index,
            "intervals": [[u, v] for u, v in self.intervals],
            "polarity": flags,
            "mixed_joins": list(self.mixed_joins),
        }


def build_partition(orbit: PostcriticalOrbit, fmap: AnalyticMap, tol: float = 1e-9) -> MarkovPartition:
    """Cut the domain at {c} ∪ P and check the Markov property.

    Raises:
        NotMarkov: a postcritical point sits on c, the cuts do not span the
            domain, or some f(I_j) is not a union of partition intervals.
    """
    c = orbit.critical_point
    a, b = fmap.domain
    scale = max(1.0, b - a)
    points = np.asarray(orbit.points)
    if np.any(np.abs(points - c) <= tol * scale):
        raise NotMarkov("a postcritical point coincides with c (c periodic or preperiodic)")

    cuts = np.sort(np.append(points, c))
    if np.any(np.diff(cuts) <= tol * scale):
        raise NotMarkov("postcritical points are not separated")
    if abs(cuts[0] - a) > tol * scale or abs(cuts[-1] - b) > tol * scale:
        raise NotMarkov("cut points do not span [a, b]", first=cuts[0], last=cuts[-1])
    critical_index = int(np.argmin(np.abs(cuts - c)))
    point_index = {int(np.argmin(np.abs(cuts - p))): i for i, p in enumerate(points)}

    for j in range(len(cuts) - 1):
        image = fmap(np.array([cuts[j], cuts[j + 1]]))
        for value in image:
            if np.min(np.abs(cuts - value)) > tol * scale:
                raise NotMarkov(f"image of interval {j} ends off the cut set",
                                interval=j, value=float(value))
    partition = MarkovPartition(tuple(float(v) for v in cuts), critical_index, point_index)
    logger.info("Markov partition with %d intervals: cuts %s", partition.m,
                np.array2string(cuts, precision=10))
    return partition


@dataclass(frozen=True)
class CoveringGraph:
    """Directed graph j -> k whenever f(I_j) covers I_k."""

    adjacency: np.ndarray
    signs: Tuple[int, ...]
    mixing_exponent: int

    @property
    def edges(self) -> List[Tuple[int, int]]:
        return [(int(j), int(k)) for j, k in zip(*np.nonzero(self.adjacency))]

    def covering(self, k: int) -> List[int]:
        """Intervals j with j covering k."""
        return [int(j) for j in np.nonzero(self.adjacency[:, k])[0]]

    def covered(self, j: int) -> List[int]:
        return [int(k) for k in np.nonzero(self.adjacency[j])[0]]

    def to_dict(self):
        return {
            "edges": [list(e) for e in self.edges],
            "signs": list(self.signs),
            "mixing_exponent": self.mixing_exponent,
        }


def adjacency_matrix(partition: MarkovPartition, fmap: AnalyticMap,
                     tol: float = 1e-9) -> Tuple[np.ndarray, Tuple[int, ...]]:
    """Covering relation and branch signs computed from endpoint images."""
    intervals = partition.intervals
    m = len(intervals)
    scale = max(1.0, fmap.domain[1] - fmap.domain[0])
    adjacency = np.zeros((m, m), dtype=int)
    signs = []
    for j, (u, v) in enumerate(intervals):
        fu, fv = float(fmap(u)), float(fmap(v))
        signs.append(1 if fv > fu else -1)
        lo, hi = min(fu, fv), max(fu, fv)
        for k, (uk, vk) in enumerate(intervals):
            if uk >= lo - tol * scale and vk <= hi + tol * scale:
                adjacency[j, k] = 1
    return adjacency, tuple(signs)


def graph_period(adjacency: np.ndarray) -> Tuple[bool, int, List[int]]:
    """Irreducibility, period and cyclic class (level mod period) per vertex."""
    m = adjacency.shape[0]
    reach = np.eye(m, dtype=int)
    power = np.eye(m, dtype=int)
    for _ in range(m):
        power = np.minimum(power @ adjacency, 1)
        reach = np.minimum(reach + power, 1)
    if not np.all(np.minimum(reach @ adjacency, 1) > 0):
        return False, 0, []
    level = {0: 0}
    frontier = [0]
    while frontier:
        nxt = []
        for j in frontier:
            for k in np.nonzero(adjacency[j])[0]:
                if int(k) not in level:
                    level[int(k)] = level[j] + 1
                    nxt.append(int(k))
        frontier = nxt
    period = 0
    for j, k in zip(*np.nonzero(adjacency)):
        period = gcd(period, abs(level[int(j)] + 1 - level[int(k)]))
    classes = [level[j] % period for j in range(m)]
    return True, period, classes


def covering_graph(partition: MarkovPartition, fmap: AnalyticMap, tol: float = 1e-9) -> CoveringGraph:
    """Covering graph with the least mixing exponent N <= 2 m^2.

    Raises:
        NotMixing: no power of the adjacency matrix up to 2 m^2 is positive.
            ``details`` carries the graph period so callers can renormalize.
    """
    adjacency, signs = adjacency_matrix(partition, fmap, tol)
    m = adjacency.shape[0]
    power = adjacency.copy()
    for n in range(1, 2 * m * m + 1):
        if np.all(power > 0):
            logger.info("Covering graph: %d edges, mixing exponent N=%d",
                        int(adjacency.sum()), n)
            return CoveringGraph(adjacency, signs, n)
        power = np.minimum(power @ adjacency, 1)
    irreducible, period, _ = graph_period(adjacency)
    raise NotMixing("covering graph is not mixing", irreducible=irreducible, period=period)


def renormalize_band(fmap: AnalyticMap, partition: MarkovPartition) -> Tuple[AnalyticMap, Tuple[float, float], int]:
    """Replace f by f^d on the band containing b when the graph has period d.

    Returns:
        (band map, band interval, d)

    Raises:
        NotMixing: the graph is reducible, aperiodic but not mixing, or the
            band return map is not unimodal.
    """
    adjacency, _ = adjacency_matrix(partition, fmap)
    irreducible, period, classes = graph_period(adjacency)
    if not irreducible or period < 2:
        raise NotMixing("covering graph cannot be made mixing by passing to a band",
                        irreducible=irreducible, period=period)
    target = classes[-1]
    members = [j for j in range(partition.m) if classes[j] == target]
    if members != list(range(members[0], members[-1] + 1)):
        raise NotMixing("cyclic class containing b is not a single band")
    band = (partition.cuts[members[0]], partition.cuts[members[-1] + 1])
    logger.info("Graph period %d: renormalizing to f^%d on band [%.12g, %.12g]",
                period, period, band[0], band[1])
    try:
        band_map = fmap.iterate_map(period, band)
    except (NoSignChange, DomainMismatch) as exc:
        raise NotMixing(f"band return map is outside the unimodal class: {exc}",
                        period=period) from exc
    return band_map, band, period


def default_probe_depth(orbit: PostcriticalOrbit) -> int:
    return orbit.preperiod + 2 * orbit.period + 3


def critical_points_of_iterate(fmap: AnalyticMap, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Interior critical points of f^n: preimages of c of level 0..n-1.

    Returns:
        (points, level) with f^level(point) = c.
    """
    a, b = fmap.domain
    c = fmap.critical_point
    levels = [np.array([c])]
    for _ in range(n - 1):
        levels.append(preimages(fmap, levels[-1]))
    points = np.concatenate(levels)
    level = np.concatenate([np.full(len(v), i) for i, v in enumerate(levels)])
    interior = (points > a) & (points < b)
    return points[interior], level[interior]


def preimages(fmap: AnalyticMap, targets) -> np.ndarray:
    """All preimages in [a, b] of the given targets (both monotone laps)."""
    a, b = fmap.domain
    c = fmap.critical_point
    targets = np.asarray(targets, dtype=float)
    result = []
    for lo, hi, increasing in ((a, c, True), (c, b, False)):
        f_lo, f_hi = float(fmap(lo)), float(fmap(hi))
        low, high = min(f_lo, f_hi), max(f_lo, f_hi)
        inside = targets[(targets >= low) & (targets <= high)]
        if inside.size:
            result.append(bisect_monotone(fmap, lo, hi, inside, increasing))
    if not result:
        return np.empty(0)
    return np.concatenate(result)


def classify_polarity(partition: MarkovPartition, fmap: AnalyticMap, orbit: PostcriticalOrbit,
                      n_probe: Optional[int] = None, tol: float = 1e-7) -> MarkovPartition:
    """Mark each doubled endpoint polar or nonpolar.

    A postcritical point is a polar "-" endpoint when it is a local maximum
    value of f^n for large n and a polar "+" endpoint when it is a local
    minimum value. Both the critical values of f^n (sampled) and the
    propagation of extremum type along the orbit are computed; they must
    agree.

    Raises:
        UnstableClassification: the two rules disagree or a critical value
            of f^n lies off the postcritical set.
    """
    n = n_probe if n_probe is not None else default_probe_depth(orbit)
    points = np.asarray(orbit.points)
    scale = max(1.0, fmap.domain[1] - fmap.domain[0])

    sampled = set()
    critical, _ = critical_points_of_iterate(fmap, n)
    for x0 in critical:
        x, d1, d2 = x0, 1.0, 0.0
        for _ in range(n):
            d2 = float(fmap.second_derivative(x)) * d1 * d1 + float(fmap.derivative(x)) * d2
            d1 = float(fmap.derivative(x)) * d1
            x = float(fmap(x))
        i = int(np.argmin(np.abs(points - x)))
        if abs(points[i] - x) > tol * scale:
            raise UnstableClassification("critical value of f^n is not postcritical",
                                         value=x, n=n)
        sampled.add((i, "max" if d2 < 0 else "min"))

    propagated = set()
    kind = "max"
    for step in range(1, n + 1):
        i = orbit.index_of_iterate(step)
        propagated.add((i, kind))
        if float(fmap.derivative(points[i])) < 0:
            kind = "min" if kind == "max" else "max"

    if sampled != propagated:
        raise UnstableClassification("sampled and propagated polarity disagree",
                                     sampled=sorted(sampled), propagated=sorted(propagated))

    last = len(partition.cuts) - 1
    polarity = {side: False for side in partition.sides()}
    for cut_index, i in partition.point_index.items():
        for kind in ("max", "min"):
            if (i, kind) not in sampled:
                continue
            side = MINUS if kind == "max" else PLUS
            if (cut_index == 0 and side == MINUS) or (cut_index == last and side == PLUS):
                raise UnstableClassification("extremum type impossible at a domain endpoint",
                                             cut_index=cut_index, kind=kind)
            polarity[(cut_index, side)] = True

    for cut_index, i in partition.point_index.items():
        if not (polarity.get((cut_index, MINUS)) or polarity.get((cut_index, PLUS))):
            raise UnstableClassification("postcritical point without a polar side",
                                         point=points[i])
    mixed = tuple(i for i in range(1, last)
                  if polarity[(i, MINUS)] != polarity[(i, PLUS)])
    if mixed:
        logger.warning("Mixed polarity at interior joins %s (one side polar, one nonpolar)",
                       list(mixed))
    logger.info("Polar sides: %s", [f"{partition.cuts[i]:.10g}{s}" for (i, s), v in
                                    sorted(polarity.items()) if v])
    return replace(partition, polarity=polarity, mixed_joins=mixed)
