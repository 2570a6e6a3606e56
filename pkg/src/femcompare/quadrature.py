"""Gauss-Legendre rules on the reference segment, triangle and quadrilateral."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SEGMENT = "segment"
TRIANGLE = "triangle"
QUADRILATERAL = "quadrilateral"

MAX_POINTS = 32


@dataclass(frozen=True)
class QuadRule:
    """Quadrature points (``(q, dim)``) and positive weights (``(q,)``)."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        for a in (self.points, self.weights):
            a.setflags(write=False)

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def gauss_legendre_1d(n: int) -> QuadRule:
    """``n``-point Gauss-Legendre rule on [-1, 1], exact to degree 2n - 1."""
    if not 1 <= n <= MAX_POINTS:
        raise ValueError(f"Gauss-Legendre point count must be in [1, {MAX_POINTS}], got {n}")
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadRule(x.reshape(-1, 1), w)


def points_for_accuracy(accuracy: int) -> int:
    return max(1, math.ceil((accuracy + 1) / 2))


def _unit_interval(n: int):
    rule = gauss_legendre_1d(n)
    return 0.5 * (rule.points[:, 0] + 1.0), 0.5 * rule.weights


@lru_cache(maxsize=None)
def rule_for_geometry(geom: str, accuracy: int) -> QuadRule:
    """A rule on the reference ``geom`` exact for polynomials of degree ``accuracy``.

    Segments use [-1, 1], quadrilaterals are tensor products on [0, 1]^2 and
    triangles use the collapsed (Duffy) map of a tensor rule, with one
    extra point per direction to absorb the map's Jacobian.
    """
    if accuracy < 0:
        raise ValueError("accuracy must be nonnegative")
    n = points_for_accuracy(accuracy)
    if geom == SEGMENT:
        return gauss_legendre_1d(n)
    if geom == QUADRILATERAL:
        x, w = _unit_interval(n)
        X, Y = np.meshgrid(x, x, indexing="ij")
        W = np.outer(w, w)
        return QuadRule(np.column_stack([X.ravel(), Y.ravel()]), W.ravel())
    if geom == TRIANGLE:
        n = points_for_accuracy(accuracy + 1)
        u, wu = _unit_interval(n)
        U, V = np.meshgrid(u, u, indexing="ij")
        W = np.outer(wu, wu) * (1.0 - U)
        pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
        return QuadRule(pts, W.ravel())
    raise ValueError(f"unsupported geometry {geom!r}")


def required_order(fe_order: int) -> int:
    """Integration accuracy used for an order-``fe_order`` discretization."""
    if fe_order < 0:
        raise ValueError("order must be nonnegative")
    return max(2, 2 * fe_order + 1)
