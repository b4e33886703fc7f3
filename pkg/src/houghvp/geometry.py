"""Continuous coordinate algebra of the joined Hough maps.

Conventions: ``H12`` parameterizes mostly vertical lines through
``(x0, 0)-(x1, h)`` by ``alpha = h - (x1 - x0)`` and ``s = x0 + d_v(alpha)``;
``H34`` parameterizes mostly horizontal lines through ``(0, y0)-(w, y1)`` by
``alpha = w - (y0 - y1)`` and ``s = y0 + d_h(alpha)``.  Within a Hough map the
column ``s`` plays the role of ``x`` and the row ``alpha`` the role of ``y``,
so a Hough map can itself be transformed again.

Everything here is exact and real-valued.  Besides the closed forms, the
module exposes the same maps as 3x3 matrices acting on homogeneous
coordinates: the image-line -> Hough-point map is linear, hence point ->
Hough-line is its inverse transpose and the double transform is a
homography.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateError, OutOfQuadrantError
from .fht import Quadrant

Branch = Literal["vertical", "horizontal"]

__all__ = [
    "Branch",
    "BorderSegment",
    "HoughCoord",
    "HoughLine",
    "ConvGeometry",
    "CoordChain",
    "skew_v",
    "skew_h",
    "seg_to_point",
    "point_to_line",
    "double_map",
    "back_project",
    "chain_map",
    "line_to_hough_matrix",
    "hough_line_of_point",
    "point_of_hough_line",
    "double_map_matrix",
    "homogeneous",
    "dehomogenize",
    "is_at_infinity",
    "first_space",
    "second_dims",
]

INFINITY_RTOL = 1e-6


def skew_v(alpha, h):
    """Column skew of ``H12``: ``h - alpha / 2``."""
    return h - alpha / 2


def skew_h(alpha, w):
    """Column skew of ``H34``: ``alpha / 2`` (independent of ``w``)."""
    return alpha / 2


def first_space(branch: Branch) -> Quadrant:
    """Space of the first transform: ``H12`` for the vertical branch, ``H34`` otherwise."""
    if branch == "vertical":
        return Quadrant.H12
    if branch == "horizontal":
        return Quadrant.H34
    raise ValueError(f"unknown branch {branch!r}")


def second_dims(branch: Branch, w: float, h: float) -> tuple[float, float]:
    """``(width, height)`` of the first Hough map, i.e. the input of the second transform."""
    if first_space(branch) is Quadrant.H12:
        return w + h, 2 * h
    return h + w, 2 * w


@dataclass(frozen=True)
class BorderSegment:
    """Segment spanning the image between opposite borders.

    ``vertical`` family: ``(a, 0)-(b, h)``; ``horizontal`` family:
    ``(0, a)-(w, b)``.
    """

    orientation: Branch
    a: float
    b: float


@dataclass(frozen=True)
class HoughCoord:
    s: float
    alpha: float
    space: Quadrant
    w: float
    h: float


class HoughLine(NamedTuple):
    """Line ``s(alpha) = offset + slope * alpha`` in a Hough map."""

    offset: float
    slope: float

    def __call__(self, alpha):
        return self.offset + self.slope * np.asarray(alpha, dtype=float)


def seg_to_point(seg: BorderSegment, w: float, h: float) -> HoughCoord:
    if seg.orientation == "vertical":
        dx = seg.b - seg.a
        if abs(dx) > h:
            raise OutOfQuadrantError(f"|x1 - x0| = {abs(dx)} exceeds h = {h}")
        alpha = h - dx
        return HoughCoord(seg.a + skew_v(alpha, h), alpha, Quadrant.H12, w, h)
    if seg.orientation == "horizontal":
        dy = seg.a - seg.b
        if abs(dy) > w:
            raise OutOfQuadrantError(f"|y0 - y1| = {abs(dy)} exceeds w = {w}")
        alpha = w - dy
        return HoughCoord(seg.a + skew_h(alpha, w), alpha, Quadrant.H34, w, h)
    raise ValueError(f"unknown orientation {seg.orientation!r}")


def point_to_line(x: float, y: float, space: Quadrant | str, w: float, h: float) -> HoughLine:
    """Hough line traced by image point ``(x, y)`` in ``H12`` or ``H34``."""
    q = Quadrant(space)
    if q is Quadrant.H12:
        # s = x + (alpha - h) y / h + h - alpha / 2
        return HoughLine(x - y + h, y / h - 0.5)
    if q is Quadrant.H34:
        # s = y - (alpha - w) x / w + alpha / 2
        return HoughLine(y + x, 0.5 - x / w)
    raise ValueError(f"point_to_line needs H12 or H34, got {q.value}")


def double_map(x: float, y: float, branch: Branch, w: float, h: float) -> HoughCoord:
    """Image point -> point of ``H34(H12)`` (vertical) or ``H34(H34)`` (horizontal)."""
    W, H = second_dims(branch, w, h)
    if branch == "vertical":
        den = h - 2 * y
        if den == 0:
            raise DegenerateError("2y = h: point on the singular line of H34(H12)")
        s = 1.5 * h + (4 * h * x - w * (2 * y + h)) / (2 * den)
        alpha = (2 * y + h) * (w + h) / (2 * y - h)
    else:
        den = 2 * x - w
        if den == 0:
            raise DegenerateError("2x = w: point on the singular line of H34(H34)")
        s = 1.5 * w + (4 * w * y + h * (2 * x - 3 * w)) / (2 * den)
        alpha = (2 * x - 3 * w) * (w + h) / den
    return HoughCoord(s, alpha, Quadrant.H34, W, H)


def back_project(s: float, alpha: float, branch: Branch, w: float, h: float, q: float = 1.0) -> np.ndarray:
    """Inverse of :func:`double_map` as a homogeneous image point.

    ``(s, alpha, q)`` may itself be homogeneous; ``alpha == (w + h) * q``
    yields a point at infinity.
    """
    wh = w + h
    den = 2.0 * (alpha - wh * q)
    if branch == "vertical":
        num_x = alpha * w + (3 * h * q - 2 * s) * wh
        num_y = h * (alpha + wh * q)
    elif branch == "horizontal":
        num_x = w * (alpha - 3 * wh * q)
        num_y = alpha * h + (3 * w * q - 2 * s) * wh
    else:
        raise ValueError(f"unknown branch {branch!r}")
    return np.array([num_x, num_y, den], dtype=float)


# -- homogeneous helpers ------------------------------------------------------


def homogeneous(x: float, y: float) -> np.ndarray:
    return np.array([x, y, 1.0])


def dehomogenize(p: Sequence[float]) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if is_at_infinity(p):
        raise DegenerateError(f"point at infinity {p.tolist()} has no affine coordinates")
    return p[:2] / p[2]


def is_at_infinity(p: Sequence[float], rtol: float = INFINITY_RTOL) -> bool:
    """``|hw| < rtol * max(|hx|, |hy|)``."""
    p = np.asarray(p, dtype=float)
    return bool(abs(p[2]) < rtol * max(abs(p[0]), abs(p[1])))


# -- matrix form --------------------------------------------------------------


def line_to_hough_matrix(space: Quadrant | str, w: float, h: float) -> np.ndarray:
    """Matrix taking an image line ``(a, b, c)`` (``ax + by + c = 0``) to its
    homogeneous Hough point ``(s, alpha, 1)``."""
    q = Quadrant(space)
    if q is Quadrant.H12:
        # x0 = -c/a, x1 - x0 = -b h / a
        return np.array([[h, -h, -2.0], [2 * h, 2 * h, 0.0], [2.0, 0.0, 0.0]])
    if q is Quadrant.H34:
        # y0 = -c/b, y0 - y1 = a w / b
        return np.array([[-w, w, -2.0], [-2 * w, 2 * w, 0.0], [0.0, 2.0, 0.0]])
    raise ValueError(f"line_to_hough_matrix needs H12 or H34, got {q.value}")


def hough_line_of_point(p: Sequence[float], space: Quadrant | str, w: float, h: float) -> np.ndarray:
    """Homogeneous line in the ``(s, alpha)`` plane traced by image point ``p``."""
    m = line_to_hough_matrix(space, w, h)
    return np.linalg.solve(m.T, np.asarray(p, dtype=float))


def point_of_hough_line(line: Sequence[float], space: Quadrant | str, w: float, h: float) -> np.ndarray:
    """Homogeneous image point whose Hough line is ``line``."""
    return line_to_hough_matrix(space, w, h).T @ np.asarray(line, dtype=float)


def double_map_matrix(branch: Branch, w: float, h: float) -> np.ndarray:
    """Homography from image points to points of the double transform."""
    space = first_space(branch)
    W, H = second_dims(branch, w, h)
    first = line_to_hough_matrix(space, w, h)
    second = line_to_hough_matrix(Quadrant.H34, W, H)
    return second @ np.linalg.inv(first).T


# -- convolution coordinate chains ---------------------------------------------


@dataclass(frozen=True)
class ConvGeometry:
    """Index geometry of one valid-padding layer: ``in = out * stride + (kernel - 1) / 2``."""

    kernel: tuple[int, int] = (1, 1)
    stride: tuple[int, int] = (1, 1)

    @property
    def offset(self) -> tuple[float, float]:
        return ((self.kernel[0] - 1) / 2.0, (self.kernel[1] - 1) / 2.0)


@dataclass(frozen=True)
class CoordChain:
    """Layers in forward order; maps output-grid indices to input coordinates."""

    layers: tuple[ConvGeometry, ...] = field(default_factory=tuple)

    def matrix(self) -> np.ndarray:
        """3x3 affine acting on ``(x=col, y=row, 1)`` output coordinates."""
        m = np.eye(3)
        for layer in self.layers:
            (sy, sx), (oy, ox) = layer.stride, layer.offset
            step = np.array([[sx, 0.0, ox], [0.0, sy, oy], [0.0, 0.0, 1.0]])
            m = m @ step
        return m

    def inverse_matrix(self) -> np.ndarray:
        return np.linalg.inv(self.matrix())


def chain_map(chain: CoordChain, index: tuple[float, float]) -> tuple[float, float]:
    """Continuous input ``(row, col)`` of output grid ``index = (row, col)``."""
    row, col = float(index[0]), float(index[1])
    for layer in reversed(chain.layers):
        (sy, sx), (oy, ox) = layer.stride, layer.offset
        row, col = row * sy + oy, col * sx + ox
    return row, col
