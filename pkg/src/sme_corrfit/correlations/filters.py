"""
Filter functions f(t) that turn the sharp detector signal into a recorded one.

A rectangular bin k of width dt has support [k dt, (k+1) dt) and height G/dt
for a diffusive detector, 1 for a jump detector (counts per bin).
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid

from sme_corrfit.quantum.model import DetectorSpec

RECT_BIN = "rect_bin"
CUSTOM_GRID = "custom_grid"


@dataclass(frozen=True, eq=False)
class FilterSpec:
    kind: str
    bin_index: int = 0
    bin_width: float = 0.0
    scale: float = 1.0
    grid: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == RECT_BIN:
            if self.bin_width <= 0 or self.bin_index < 0:
                raise ValueError("rect_bin needs bin_index >= 0 and bin_width > 0")
        elif self.kind == CUSTOM_GRID:
            grid = np.asarray(self.grid, dtype=float)
            values = np.asarray(self.values, dtype=float)
            if grid.ndim != 1 or grid.size < 2 or grid.shape != values.shape:
                raise ValueError("custom_grid needs matching 1-D grid and values (>= 2 samples)")
            if np.any(np.diff(grid) <= 0) or grid[0] < 0:
                raise ValueError("custom_grid times must be non-negative and increasing")
            object.__setattr__(self, "grid", grid)
            object.__setattr__(self, "values", values)
        else:
            raise ValueError(f"unknown filter kind {self.kind!r}")

    @classmethod
    def rect_bin(cls, k: int, bin_width: float, scale: float = 1.0) -> "FilterSpec":
        return cls(RECT_BIN, bin_index=int(k), bin_width=float(bin_width), scale=float(scale))

    @classmethod
    def custom_grid(cls, times, values) -> "FilterSpec":
        """Piecewise-linear filter through (times, values), zero outside the grid."""
        return cls(CUSTOM_GRID, grid=times, values=values)

    @property
    def is_rect(self) -> bool:
        return self.kind == RECT_BIN

    def support(self) -> Tuple[float, float]:
        if self.is_rect:
            return self.bin_index * self.bin_width, (self.bin_index + 1) * self.bin_width
        return float(self.grid[0]), float(self.grid[-1])

    def breakpoints(self) -> np.ndarray:
        return np.array(self.support()) if self.is_rect else self.grid

    @property
    def center(self) -> float:
        start, end = self.support()
        return 0.5 * (start + end)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        start, end = self.support()
        if self.is_rect:
            return np.where((t >= start) & (t < end), self.scale, 0.0)
        inside = (t >= start) & (t <= end)
        return np.where(inside, np.interp(t, self.grid, self.values), 0.0)

    def value_on(self, t: float, seg_start: float, seg_end: float) -> float:
        """
        f(t) for t inside the segment [seg_start, seg_end] between breakpoints.

        Rectangular filters are constant on a segment, so they are evaluated at
        its midpoint; this keeps the closed endpoints consistent with the
        half-open support.
        """
        if self.is_rect:
            return float(self(0.5 * (seg_start + seg_end)))
        return float(self(min(max(t, seg_start), seg_end)))

    def max_abs(self) -> float:
        return abs(self.scale) if self.is_rect else float(np.max(np.abs(self.values)))

    def integral(self) -> float:
        if self.is_rect:
            return self.scale * self.bin_width
        return float(trapezoid(self.values, self.grid))


def bin_filter(detector: DetectorSpec, k: int) -> FilterSpec:
    """Rectangular filter of bin k for the given detector."""
    if not 0 <= k < detector.n_bins:
        raise IndexError(f"bin {k} outside 0..{detector.n_bins - 1} for detector '{detector.name}'")
    return FilterSpec.rect_bin(k, detector.bin_width, detector.bin_scale)


def segment_edges(filters, t_end: float) -> np.ndarray:
    """Sorted breakpoints of all filters within [0, t_end], including both ends."""
    points = [0.0, t_end]
    for f in filters:
        points.extend(float(b) for b in f.breakpoints())
    edges = np.unique(np.clip(points, 0.0, t_end))
    return edges
