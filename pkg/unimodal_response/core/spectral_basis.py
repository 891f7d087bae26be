"""
Per-interval polynomial basis on the chart intervals J_k.

Functions are stored by their values at D+1 interior Gauss-Legendre nodes;
coefficients are kept in the Chebyshev basis for evaluation, differentiation
and antidifferentiation.
"""
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from numpy.polynomial import chebyshev, legendre

from .errors import ConfigError


def _coefficient_operator(func, degree: int) -> np.ndarray:
    """Matrix of a linear map on Chebyshev coefficient vectors."""
    columns = []
    for i in range(degree + 1):
        unit = np.zeros(degree + 1)
        unit[i] = 1.0
        columns.append(func(unit))
    width = max(len(c) for c in columns)
    return np.column_stack([np.pad(c, (0, width - len(c))) for c in columns])


class IntervalBasis:
    """Degree-D polynomial space on one interval [y_left, y_right]."""

    def __init__(self, y_left: float, y_right: float, degree: int):
        self.y_left = float(y_left)
        self.y_right = float(y_right)
        self.length = self.y_right - self.y_left
        self.degree = degree

        reference_nodes, reference_weights = legendre.leggauss(degree + 1)
        self.reference_nodes = reference_nodes
        self.nodes = self.to_interval(reference_nodes)
        self.weights = reference_weights * (self.length / 2.0)

        vandermonde = chebyshev.chebvander(reference_nodes, degree)
        self.values_to_coeffs = np.linalg.inv(vandermonde)

        derivative = _coefficient_operator(chebyshev.chebder, degree)
        self.differentiation = (chebyshev.chebvander(reference_nodes, degree - 1)
                                @ derivative @ self.values_to_coeffs) * (2.0 / self.length)

        # antiderivative vanishing at y_left, degree D+1
        self._integral_coeffs = _coefficient_operator(
            lambda c: chebyshev.chebint(c, lbnd=-1.0), degree) @ self.values_to_coeffs
        self._integral_coeffs *= self.length / 2.0

    def to_reference(self, z):
        return (2.0 * np.asarray(z) - self.y_left - self.y_right) / self.length

    def to_interval(self, t):
        return 0.5 * (self.y_left + self.y_right) + 0.5 * self.length * np.asarray(t)

    def interpolation_matrix(self, z) -> np.ndarray:
        """Rows mapping node values to values at the (possibly complex) points z."""
        t = np.atleast_1d(self.to_reference(z))
        return chebyshev.chebvander(t, self.degree) @ self.values_to_coeffs

    def derivative_matrix(self, z) -> np.ndarray:
        """Rows mapping node values to derivative values at the points z."""
        t = np.atleast_1d(self.to_reference(z))
        derivative = _coefficient_operator(chebyshev.chebder, self.degree)
        return (chebyshev.chebvander(t, self.degree - 1) @ derivative
                @ self.values_to_coeffs) * (2.0 / self.length)

    def evaluate(self, values, z):
        return self.interpolation_matrix(z) @ values

    def antiderivative_matrix(self, z=None) -> np.ndarray:
        """Rows mapping node values to the antiderivative (zero at y_left)."""
        t = self.reference_nodes if z is None else np.atleast_1d(self.to_reference(z))
        return chebyshev.chebvander(t, self.degree + 1) @ self._integral_coeffs

    def project(self, func) -> np.ndarray:
        """Node values of ``func``."""
        return np.asarray(func(self.nodes))


@dataclass
class SpectralBasis:
    """The product space of per-interval polynomial spaces.

    Global vectors are the concatenation of node values interval by interval.
    """

    pieces: List[IntervalBasis]

    @classmethod
    def build(cls, lengths: Sequence[float], degree: int):
        if degree < 8:
            raise ConfigError("basis degree must be at least 8", degree=degree)
        pieces, start = [], 0.0
        for length in lengths:
            pieces.append(IntervalBasis(start, start + float(length), degree))
            start += float(length)
        return cls(pieces)

    @property
    def degree(self) -> int:
        return self.pieces[0].degree

    @property
    def block(self) -> int:
        return self.degree + 1

    @property
    def size(self) -> int:
        return self.block * len(self.pieces)

    def slice(self, k: int) -> slice:
        return slice(k * self.block, (k + 1) * self.block)

    @property
    def nodes(self) -> np.ndarray:
        return np.concatenate([piece.nodes for piece in self.pieces])

    @property
    def mass(self) -> np.ndarray:
        """Row vector of quadrature weights: mass(Φ) = mass @ Φ."""
        return np.concatenate([piece.weights for piece in self.pieces])

    @property
    def differentiation(self) -> np.ndarray:
        matrix = np.zeros((self.size, self.size))
        for k, piece in enumerate(self.pieces):
            matrix[self.slice(k), self.slice(k)] = piece.differentiation
        return matrix

    def project(self, funcs) -> np.ndarray:
        """Node values from one callable per interval (or a single callable)."""
        if callable(funcs):
            funcs = [funcs] * len(self.pieces)
        return np.concatenate([piece.project(func) for piece, func in zip(self.pieces, funcs)])

    def evaluate(self, values, k: int, z):
        return self.pieces[k].evaluate(np.asarray(values)[self.slice(k)], z)

    def endpoint_values(self, values) -> List[Tuple[complex, complex]]:
        """(left, right) values per interval."""
        result = []
        for k, piece in enumerate(self.pieces):
            left, right = piece.evaluate(np.asarray(values)[self.slice(k)],
                                         [piece.y_left, piece.y_right])
            result.append((left, right))
        return result

    def endpoint_derivatives(self, values) -> List[Tuple[complex, complex]]:
        result = []
        for k, piece in enumerate(self.pieces):
            rows = piece.derivative_matrix([piece.y_left, piece.y_right])
            left, right = rows @ np.asarray(values)[self.slice(k)]
            result.append((left, right))
        return result

    def antiderivative(self, values, left_value=0.0) -> Tuple[np.ndarray, List[Tuple[complex, complex]]]:
        """Continuous antiderivative across joins, starting from ``left_value``.

        Returns:
            (node values, per-interval (left, right) end values)
        """
        values = np.asarray(values)
        out = np.zeros(self.size, dtype=np.result_type(values, complex if np.iscomplexobj(left_value) else float))
        ends = []
        offset = left_value
        for k, piece in enumerate(self.pieces):
            local = values[self.slice(k)]
            out[self.slice(k)] = offset + piece.antiderivative_matrix() @ local
            right = offset + (piece.antiderivative_matrix([piece.y_right]) @ local)[0]
            ends.append((offset, right))
            offset = right
        return out, ends

    def to_dict(self):
        return {
            "degree": self.degree,
            "intervals": [[p.y_left, p.y_right] for p in self.pieces],
        }
