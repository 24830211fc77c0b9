"""Second-order forward-mode jets.

A :class:`Jet2` carries the value, gradient and Hessian of a scalar function of
``t`` in R^n, batched over ``P`` evaluation points. Arithmetic and elementary
functions propagate all three exactly by the chain rule, so composed maps get
exact order-2 jets without finite differencing.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Jet2:
    val: np.ndarray  # (P,)
    d1: np.ndarray  # (P, n)
    d2: np.ndarray  # (P, n, n)

    @staticmethod
    def variables(t: np.ndarray) -> list["Jet2"]:
        """Coordinate jets of the points ``t`` with shape (P, n)."""
        t = np.atleast_2d(np.asarray(t, dtype=float))
        P, n = t.shape
        eye = np.eye(n)
        zero2 = np.zeros((P, n, n))
        return [Jet2(t[:, i].copy(), np.broadcast_to(eye[i], (P, n)).copy(), zero2) for i in range(n)]

    @staticmethod
    def linear(t: np.ndarray, coeffs: np.ndarray, offset: float = 0.0) -> "Jet2":
        t = np.atleast_2d(np.asarray(t, dtype=float))
        coeffs = np.asarray(coeffs, dtype=float)
        P, n = t.shape
        return Jet2(t @ coeffs + offset, np.broadcast_to(coeffs, (P, n)).copy(), np.zeros((P, n, n)))

    def __add__(self, other):
        if isinstance(other, Jet2):
            return Jet2(self.val + other.val, self.d1 + other.d1, self.d2 + other.d2)
        return Jet2(self.val + other, self.d1, self.d2)

    __radd__ = __add__

    def __neg__(self):
        return Jet2(-self.val, -self.d1, -self.d2)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, Jet2):
            val = self.val * other.val
            d1 = self.d1 * other.val[:, None] + other.d1 * self.val[:, None]
            cross = np.einsum("pi,pj->pij", self.d1, other.d1)
            d2 = (
                self.d2 * other.val[:, None, None]
                + other.d2 * self.val[:, None, None]
                + cross
                + cross.transpose(0, 2, 1)
            )
            return Jet2(val, d1, d2)
        return Jet2(self.val * other, self.d1 * other, self.d2 * other)

    __rmul__ = __mul__

    def compose(self, f0: np.ndarray, f1: np.ndarray, f2: np.ndarray) -> "Jet2":
        """Apply a scalar function g given g, g', g'' already evaluated at ``self.val``."""
        d1 = f1[:, None] * self.d1
        d2 = f2[:, None, None] * np.einsum("pi,pj->pij", self.d1, self.d1) + f1[:, None, None] * self.d2
        return Jet2(np.asarray(f0, dtype=float), d1, d2)

    def apply(self, fn: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]) -> "Jet2":
        return self.compose(*fn(self.val))

    def cos(self) -> "Jet2":
        c, s = np.cos(self.val), np.sin(self.val)
        return self.compose(c, -s, -c)

    def sin(self) -> "Jet2":
        c, s = np.cos(self.val), np.sin(self.val)
        return self.compose(s, c, -s)


def stack(components: list[Jet2]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack scalar jets into (value (P, M), D1 (P, M, n), D2 (P, M, n, n))."""
    val = np.stack([c.val for c in components], axis=1)
    d1 = np.stack([c.d1 for c in components], axis=1)
    d2 = np.stack([c.d2 for c in components], axis=1)
    return val, d1, d2
