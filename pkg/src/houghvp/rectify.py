"""Rectifying homographies from vanishing points, projective warping and the
corner-angle / orientation quality metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateError

__all__ = [
    "Quad",
    "AngleStats",
    "MetricReport",
    "homography_from_vps",
    "normalize_homography",
    "transform_points",
    "transform_quad",
    "output_frame",
    "warp",
    "bilinear_sample",
    "corner_angles",
    "edge_orientations",
    "metric_d1",
    "metric_d2",
    "evaluate_quads",
    "psnr",
]


@dataclass(frozen=True)
class Quad:
    """Corners ordered top-left, top-right, bottom-right, bottom-left."""

    corners: np.ndarray  # (4, 2)

    def __post_init__(self):
        c = np.asarray(self.corners, dtype=float)
        if c.shape != (4, 2):
            raise ValueError(f"quad needs 4 corners of 2 coordinates, got {c.shape}")
        object.__setattr__(self, "corners", c)

    @classmethod
    def from_list(cls, pts: Sequence[Sequence[float]]) -> "Quad":
        return cls(np.asarray(pts, dtype=float))

    def tolist(self) -> list[list[float]]:
        return self.corners.tolist()

    def signed_area(self) -> float:
        x, y = self.corners[:, 0], self.corners[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def is_simple(self) -> bool:
        c = self.corners

        def cross(o, a, b):
            return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

        def intersects(p1, p2, p3, p4):
            d1, d2 = cross(p3, p4, p1), cross(p3, p4, p2)
            d3, d4 = cross(p1, p2, p3), cross(p1, p2, p4)
            return (d1 * d2 < 0) and (d3 * d4 < 0)

        if intersects(c[0], c[1], c[2], c[3]) or intersects(c[1], c[2], c[3], c[0]):
            return False
        return abs(self.signed_area()) > 0


@dataclass
class AngleStats:
    corner_deviation: np.ndarray  # (N, 4) |90 - angle| in degrees
    alpha_v: np.ndarray  # (N,)
    alpha_h: np.ndarray  # (N,)

    @property
    def n(self) -> int:
        return len(self.alpha_v)


@dataclass
class MetricReport:
    d1: float
    d2: float
    n: int
    excluded: int
    per_document: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"d1": self.d1, "d2": self.d2, "n": self.n, "excluded": self.excluded, "per_document": self.per_document}


# -- homographies --------------------------------------------------------------------


def normalize_homography(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if abs(m[2, 2]) > 1e-12 * np.abs(m).max():
        return m / m[2, 2]
    return m / np.abs(m).max()


def transform_points(m: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Apply ``m`` to ``(N, 2)`` points; raises if any maps to infinity."""
    pts = np.asarray(pts, dtype=float)
    ph = np.c_[pts, np.ones(len(pts))] @ np.asarray(m, dtype=float).T
    scale = np.abs(ph).max(axis=1)
    if np.any(np.abs(ph[:, 2]) <= 1e-12 * scale):
        raise DegenerateError("a point maps to infinity under the homography")
    return ph[:, :2] / ph[:, 2:]


def homography_from_vps(horizontal_vp, vertical_vp, w: int, h: int) -> np.ndarray:
    """Homography sending the two vanishing points to the x and y directions at infinity.

    The image centre stays fixed and axis scales at the centre are
    normalized to one.  Rectification is defined up to this normalization:
    shift and per-axis scale are not recoverable from two vanishing points.
    """
    vh = np.asarray(horizontal_vp, dtype=float)
    vv = np.asarray(vertical_vp, dtype=float)
    c = np.array([(w - 1) / 2.0, (h - 1) / 2.0, 1.0])
    m = np.column_stack([vh / np.linalg.norm(vh), vv / np.linalg.norm(vv), c])
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > 1e12:
        raise DegenerateError("vanishing points are coincident or collinear with the image centre")
    base = np.linalg.inv(m)
    # base sends c to (0, 0, 1), so its Jacobian at c is the upper-left block
    jac = base[:2, :2]
    sx = 1.0 / np.linalg.norm(jac[0])
    sy = 1.0 / np.linalg.norm(jac[1])
    if jac[0, 0] < 0:
        sx = -sx
    if jac[1, 1] < 0:
        sy = -sy
    scale = np.diag([sx, sy, 1.0])
    shift = np.array([[1.0, 0.0, c[0]], [0.0, 1.0, c[1]], [0.0, 0.0, 1.0]])
    return normalize_homography(shift @ scale @ base)


def transform_quad(q: Quad, m: np.ndarray) -> Quad:
    return Quad(transform_points(m, q.corners))


# -- warping -------------------------------------------------------------------------


def bilinear_sample(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear interpolation at pixel coordinates; samples outside the image are zero."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    out = np.zeros(np.shape(x))
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xi, yi = x0 + dx, y0 + dy
            ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            weight = wx * wy
            vals = np.zeros(np.shape(x))
            vals[ok] = img[yi[ok], xi[ok]]
            out += weight * vals
    return out


def output_frame(m: np.ndarray, w: int, h: int, max_size: int = 4096) -> tuple[np.ndarray, tuple[int, int]]:
    """Origin and ``(height, width)`` of the bounding box of the warped image corners."""
    corners = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=float)
    pts = transform_points(m, corners)
    lo = np.floor(pts.min(axis=0) + 1e-9)
    hi = np.ceil(pts.max(axis=0) - 1e-9)
    size = hi - lo + 1
    if np.any(size < 1) or not np.all(np.isfinite(size)):
        raise DegenerateError("warped frame has zero area")
    width, height = (int(min(v, max_size)) for v in size)
    return lo, (height, width)


def warp(
    img: np.ndarray,
    m: np.ndarray,
    *,
    shape: tuple[int, int] | None = None,
    origin: Sequence[float] | None = None,
    max_size: int = 4096,
) -> np.ndarray:
    """Inverse-mapping warp of ``img`` by homography ``m`` with bilinear sampling.

    Output pixel ``(i, j)`` sits at destination coordinates
    ``origin + (j, i)``; by default the frame is the bounding box of the
    warped input corners (clamped to ``max_size``).
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    m = np.asarray(m, dtype=float)
    if abs(np.linalg.det(m)) < 1e-12 * np.abs(m).max() ** 3:
        raise DegenerateError("homography is singular")
    if shape is None or origin is None:
        o, s = output_frame(m, w, h, max_size)
        origin = o if origin is None else origin
        shape = s if shape is None else shape
    oh, ow = shape
    if oh < 1 or ow < 1:
        raise DegenerateError("output frame has zero area")
    ys, xs = np.mgrid[0:oh, 0:ow].astype(float)
    dst = np.stack([xs.ravel() + origin[0], ys.ravel() + origin[1], np.ones(xs.size)])
    src = np.linalg.inv(m) @ dst
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = src[0] / src[2]
        sy = src[1] / src[2]
    # points beyond the vanishing line have the opposite homogeneous sign
    centre = np.array([(w - 1) / 2.0, (h - 1) / 2.0, 1.0])
    side = np.sign((m @ centre)[2])
    bad = ~np.isfinite(sx) | ~np.isfinite(sy) | (np.sign(src[2]) != side)
    sx[bad] = -10.0
    sy[bad] = -10.0
    return bilinear_sample(img, sx, sy).reshape(oh, ow)


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    mse = float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


# -- metrics ------------------------------------------------------------------------------


def corner_angles(q: Quad) -> np.ndarray:
    """Interior angles in degrees at the four corners."""
    c = q.corners
    out = np.empty(4)
    for i in range(4):
        a = c[i - 1] - c[i]
        b = c[(i + 1) % 4] - c[i]
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0 or nb == 0:
            raise DegenerateError("quad has coincident corners")
        cos = np.clip(a @ b / (na * nb), -1.0, 1.0)
        out[i] = np.degrees(np.arccos(cos))
    return out


def _wrap90(angle: np.ndarray) -> np.ndarray:
    """Map degrees to (-90, 90]."""
    a = (np.asarray(angle) + 90.0) % 180.0 - 90.0
    return np.where(a == -90.0, 90.0, a)


def edge_orientations(q: Quad) -> tuple[float, float]:
    """``(alpha_v, alpha_h)``: mean signed angle of the left/right edges against
    the y axis and of the top/bottom edges against the x axis, in degrees."""
    tl, tr, br, bl = q.corners
    top, bottom = tr - tl, br - bl
    left, right = bl - tl, br - tr
    ah = _wrap90(np.degrees([np.arctan2(top[1], top[0]), np.arctan2(bottom[1], bottom[0])]))
    av = _wrap90(np.degrees([np.arctan2(-left[0], left[1]), np.arctan2(-right[0], right[1])]))
    return float(np.mean(av)), float(np.mean(ah))


def _valid(q: Quad) -> bool:
    c = q.corners
    if not np.all(np.isfinite(c)) or not q.is_simple():
        return False
    return bool(np.all(np.linalg.norm(c - np.roll(c, -1, axis=0), axis=1) > 0))


def angle_stats(quads: Sequence[Quad]) -> tuple[AngleStats, int]:
    dev, av, ah = [], [], []
    excluded = 0
    for q in quads:
        if not _valid(q):
            excluded += 1
            continue
        dev.append(np.abs(90.0 - corner_angles(q)))
        v, hh = edge_orientations(q)
        av.append(v)
        ah.append(hh)
    return AngleStats(np.array(dev).reshape(-1, 4), np.array(av), np.array(ah)), excluded


def metric_d1(quads: Sequence[Quad]) -> float:
    """Mean absolute deviation of the corner angles from 90 degrees."""
    stats, _ = angle_stats(list(quads))
    if stats.n == 0:
        raise DegenerateError("no valid quads")
    return float(stats.corner_deviation.sum() / (4 * stats.n))


def metric_d2(quads: Sequence[Quad]) -> float:
    """Mean absolute residual edge orientation, ``(|alpha_v| + |alpha_h|) / 2`` averaged."""
    stats, _ = angle_stats(list(quads))
    if stats.n == 0:
        raise DegenerateError("no valid quads")
    return float((np.abs(stats.alpha_v) + np.abs(stats.alpha_h)).sum() / (2 * stats.n))


def evaluate_quads(quads: Sequence[Quad]) -> MetricReport:
    quads = list(quads)
    stats, excluded = angle_stats(quads)
    if stats.n == 0:
        raise DegenerateError("no valid quads")
    per_doc = [
        {"corner_deviation": stats.corner_deviation[i].tolist(), "alpha_v": float(stats.alpha_v[i]), "alpha_h": float(stats.alpha_h[i])}
        for i in range(stats.n)
    ]
    d1 = float(stats.corner_deviation.sum() / (4 * stats.n))
    d2 = float((np.abs(stats.alpha_v) + np.abs(stats.alpha_h)).sum() / (2 * stats.n))
    return MetricReport(d1, d2, stats.n, excluded, per_doc)
