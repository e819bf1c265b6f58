"""Sampled scalar fields on axis-aligned boxes and their text interchange format.

The interchange format is one header line ``dims=.. spacing=.. origin=..``
(comma-separated per axis) followed by the row-major values, one line per
run of the last axis, written with 17 significant digits so that a round
trip is bit-exact.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ShapeMismatchError


@dataclass(frozen=True, eq=False)
class GridFunction:
    values: np.ndarray
    spacing: tuple[float, ...]
    origin: tuple[float, ...]

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        spacing = tuple(float(h) for h in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if vals.ndim == 0:
            raise ShapeMismatchError("grid function needs at least one axis")
        if len(spacing) != vals.ndim or len(origin) != vals.ndim:
            raise ShapeMismatchError(
                f"spacing/origin lengths {len(spacing)}/{len(origin)} do not match ndim {vals.ndim}")
        if any(not (h > 0 and np.isfinite(h)) for h in spacing):
            raise ValueError(f"spacings must be positive and finite, got {spacing}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite (NaN/inf found)")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing[axis] * np.arange(self.dims[axis])

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*(self.coords(i) for i in range(self.ndim)), indexing="ij")

    def extent(self, axis: int) -> float:
        return self.spacing[axis] * (self.dims[axis] - 1)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(values, self.spacing, self.origin)

    def translated(self, offset) -> "GridFunction":
        return GridFunction(self.values, self.spacing, tuple(o + d for o, d in zip(self.origin, offset)))

    def __eq__(self, other):
        if not isinstance(other, GridFunction):
            return NotImplemented
        return (self.spacing == other.spacing and self.origin == other.origin
                and self.dims == other.dims and np.array_equal(self.values, other.values))

    __hash__ = None

    @classmethod
    def sample(cls, func, lower, upper, nodes) -> "GridFunction":
        """Sample ``func(*coords)`` on a uniform box grid with ``nodes`` points per axis."""
        lower = tuple(float(v) for v in lower)
        upper = tuple(float(v) for v in upper)
        nodes = tuple(int(n) for n in nodes)
        if not (len(lower) == len(upper) == len(nodes)):
            raise ShapeMismatchError("lower/upper/nodes must have equal length")
        spacing = tuple((hi - lo) / (n - 1) for lo, hi, n in zip(lower, upper, nodes))
        axes = [lo + h * np.arange(n) for lo, h, n in zip(lower, spacing, nodes)]
        mesh = np.meshgrid(*axes, indexing="ij")
        vals = np.broadcast_to(np.asarray(func(*mesh), dtype=np.float64), tuple(nodes))
        return cls(vals, spacing, lower)


def _fmt(vals) -> str:
    return ",".join(repr(float(v)) for v in vals)


def dumps(grid: GridFunction) -> str:
    buf = io.StringIO()
    buf.write(f"dims={','.join(str(n) for n in grid.dims)} spacing={_fmt(grid.spacing)} origin={_fmt(grid.origin)}\n")
    rows = grid.values.reshape(-1, grid.dims[-1])
    for row in rows:
        buf.write(" ".join("%.17g" % v for v in row))
        buf.write("\n")
    return buf.getvalue()


def loads(text: str) -> GridFunction:
    header, _, body = text.partition("\n")
    fields = {}
    for token in header.split():
        key, sep, value = token.partition("=")
        if not sep:
            raise ConfigurationError(f"malformed grid header token {token!r}")
        fields[key] = value
    missing = {"dims", "spacing", "origin"} - set(fields)
    if missing:
        raise ConfigurationError(f"grid header lacks {sorted(missing)}")
    unknown = set(fields) - {"dims", "spacing", "origin"}
    if unknown:
        raise ConfigurationError(f"unknown grid header keys {sorted(unknown)}")
    try:
        dims = tuple(int(v) for v in fields["dims"].split(","))
        spacing = tuple(float(v) for v in fields["spacing"].split(","))
        origin = tuple(float(v) for v in fields["origin"].split(","))
        vals = np.array(body.split(), dtype=np.float64)
    except ValueError as exc:
        raise ConfigurationError(f"unparsable grid file: {exc}") from exc
    if vals.size != int(np.prod(dims)):
        raise ConfigurationError(f"grid file holds {vals.size} values, header promises {int(np.prod(dims))}")
    return GridFunction(vals.reshape(dims), spacing, origin)


def save(grid: GridFunction, path) -> None:
    with open(os.fspath(path), "w") as fh:
        fh.write(dumps(grid))


def load(path) -> GridFunction:
    with open(os.fspath(path)) as fh:
        return loads(fh.read())
