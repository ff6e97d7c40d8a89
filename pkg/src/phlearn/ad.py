"""Forward-mode scalars carrying d/dstate and d/dparams tangent rows.

The network assembler evaluates every port variable once; running the same
straight-line code on Jet values instead of floats yields the exact rows of
d(rhs)/dx and d(rhs)/dw without a second derivation of the assembly logic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Jet:
    """Value plus tangent rows wrt the state (n,) and parameter (m,) vectors."""

    val: float
    dx: np.ndarray
    dw: np.ndarray

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.val + other.val, self.dx + other.dx, self.dw + other.dw)
        return Jet(self.val + other, self.dx, self.dw)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet):
            return Jet(self.val - other.val, self.dx - other.dx, self.dw - other.dw)
        return Jet(self.val - other, self.dx, self.dw)

    def __rsub__(self, other):
        return Jet(other - self.val, -self.dx, -self.dw)

    def __neg__(self):
        return Jet(-self.val, -self.dx, -self.dw)

    def __mul__(self, other):
        if isinstance(other, Jet):
            return Jet(
                self.val * other.val,
                self.dx * other.val + other.dx * self.val,
                self.dw * other.val + other.dw * self.val,
            )
        return Jet(self.val * other, self.dx * other, self.dw * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            inv = 1.0 / other.val
            v = self.val * inv
            return Jet(
                v,
                (self.dx - v * other.dx) * inv,
                (self.dw - v * other.dw) * inv,
            )
        return Jet(self.val / other, self.dx / other, self.dw / other)


def jet_const(value: float, n: int, m: int) -> Jet:
    return Jet(float(value), np.zeros(n), np.zeros(m))


def jet_state(value: float, index: int, n: int, m: int) -> Jet:
    dx = np.zeros(n)
    dx[index] = 1.0
    return Jet(float(value), dx, np.zeros(m))


def jet_from_derivs(value: float, dval_dx: np.ndarray, dval_dw: np.ndarray) -> Jet:
    return Jet(float(value), np.asarray(dval_dx, float), np.asarray(dval_dw, float))


def seed_states(x: np.ndarray, m: int) -> list[Jet]:
    """One Jet per state component, seeded with unit state tangents."""
    n = x.size
    return [jet_state(x[i], i, n, m) for i in range(n)]
