"""Sampled complex fields on regular grids, with CSV export."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .geometry import Domain

AXIS_NAMES = ("x", "y", "z")


def fmt(v: float) -> str:
    """Shortest round-trip decimal (at most 17 significant digits)."""
    return repr(float(v))


@dataclass
class FieldGrid:
    axes: list                 # one 1D coordinate array per dimension
    values: np.ndarray         # complex, shape = tuple(len(a) for a in axes)
    gradient: np.ndarray | None = None

    def __post_init__(self):
        self.axes = [np.asarray(a, dtype=float) for a in self.axes]
        self.values = np.asarray(self.values, dtype=complex).reshape(self.shape)

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def dim(self):
        return len(self.axes)

    @property
    def spacing(self):
        return tuple(float(a[1] - a[0]) if len(a) > 1 else 0.0 for a in self.axes)

    def points(self) -> np.ndarray:
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @classmethod
    def from_field(cls, field, domain: Domain, n, with_gradient=False):
        n = np.broadcast_to(np.asarray(n, dtype=int), (domain.dim,))
        axes = [np.linspace(lo, hi, m) for (lo, hi), m in zip(domain.bounds, n)]
        g = cls(axes, np.zeros(tuple(n), dtype=complex))
        x = g.points()
        g.values = np.asarray(field.value(x), dtype=complex).reshape(g.shape)
        if with_gradient:
            g.gradient = np.asarray(field.gradient(x)).reshape(g.shape + (domain.dim,))
        return g

    def max_abs_diff(self, field) -> float:
        return float(np.max(np.abs(self.values.ravel() - field.value(self.points()))))

    def header(self):
        return list(AXIS_NAMES[: self.dim]) + ["re_u", "im_u"]

    def to_csv(self, path):
        """Rows in C order over the grid (last axis fastest)."""
        x = self.points()
        v = self.values.ravel()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            for p, z in zip(x, v):
                w.writerow([fmt(c) for c in p] + [fmt(z.real), fmt(z.imag)])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        head, data = rows[0], np.array(rows[1:], dtype=float)
        dim = len(head) - 2
        if head != list(AXIS_NAMES[:dim]) + ["re_u", "im_u"]:
            raise ValueError(f"unexpected CSV header {head}")
        axes = [np.unique(data[:, j]) for j in range(dim)]
        return cls(axes, (data[:, dim] + 1j * data[:, dim + 1]).reshape(tuple(len(a) for a in axes)))
