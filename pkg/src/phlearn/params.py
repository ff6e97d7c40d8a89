"""Flat parameter vector with named slices.

All trainable quantities of a model live in one flat float64 array, so the
optimizer sees a single unconstrained vector. Each component (an energy map,
a resistive map, a two-port map) owns a named contiguous slice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError


@dataclass
class ParamVector:
    """Flat parameter storage plus the slice table mapping names into it.

    Slices are disjoint and cover the vector exactly; reading a slice and
    writing it back is the identity.
    """

    values: np.ndarray
    slices: dict[str, slice] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.validate()

    def validate(self) -> None:
        covered = np.zeros(self.values.size, dtype=int)
        for name, sl in self.slices.items():
            if sl.step not in (None, 1):
                raise StructuralError(f"slice {name!r} must be contiguous")
            covered[sl] += 1
        if covered.size and not np.all(covered == 1):
            bad = np.flatnonzero(covered != 1)
            raise StructuralError(
                f"slices must disjointly cover the vector; offending indices {bad[:8].tolist()}"
            )

    @property
    def size(self) -> int:
        return self.values.size

    def get(self, name: str) -> np.ndarray:
        return self.values[self.slices[name]].copy()

    def set(self, name: str, vals) -> None:
        vals = np.asarray(vals, dtype=float)
        sl = self.slices[name]
        if vals.size != sl.stop - sl.start:
            raise StructuralError(
                f"slice {name!r} expects {sl.stop - sl.start} values, got {vals.size}"
            )
        self.values[sl] = vals

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), dict(self.slices))

    def replaced(self, values: np.ndarray) -> "ParamVector":
        """Same slice table, new values (must match length)."""
        values = np.asarray(values, dtype=float)
        if values.size != self.values.size:
            raise StructuralError(
                f"expected {self.values.size} values, got {values.size}"
            )
        return ParamVector(values.copy(), dict(self.slices))


def build_param_vector(blocks: list[tuple[str, np.ndarray]]) -> ParamVector:
    """Concatenate named blocks (in the given order) into a ParamVector."""
    slices: dict[str, slice] = {}
    chunks = []
    offset = 0
    for name, vals in blocks:
        vals = np.asarray(vals, dtype=float).ravel()
        if name in slices:
            raise StructuralError(f"duplicate parameter block {name!r}")
        slices[name] = slice(offset, offset + vals.size)
        chunks.append(vals)
        offset += vals.size
    values = np.concatenate(chunks) if chunks else np.zeros(0)
    return ParamVector(values, slices)
