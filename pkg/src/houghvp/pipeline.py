"""Vanishing points from double Hough maps: peak extraction, the classical
double-FHT detector, network inference and training targets.

All coordinate bookkeeping goes through :class:`DoubleHoughFrame`, a chain
of 3x3 maps between the output grid and the source image:

``output grid -> (post chain) -> second map raster -> second map continuous
-> line in second FHT input -> (mid chain) -> line in first map raster ->
line in first map continuous -> (back projection) -> first FHT input ->
(pre chain) -> image``.

The raster/continuous step accounts for two rasterization details: a dyadic
line of shift ``t`` spans ``t`` pixels over ``n - 1`` rows (the continuous
parameterization spans ``n`` rows), and the skew is rounded half down.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidMapError, NoStructureError, UnrepresentableTargetError
from .fht import Quadrant, hough_transform, next_power_of_two, pad_integration_axis
from .geometry import (
    Branch,
    CoordChain,
    back_project,
    first_space,
    hough_line_of_point,
    is_at_infinity,
    line_to_hough_matrix,
    second_dims,
)
from .nn import HoughNet

log = logging.getLogger(__name__)

__all__ = [
    "VanishingPair",
    "BranchResult",
    "TargetMap",
    "DoubleHoughFrame",
    "raster_to_continuous",
    "extract_peak",
    "tied_rows",
    "refine_peak",
    "classical_detect",
    "classical_branch",
    "edge_map",
    "network_detect",
    "network_branch",
    "make_target",
    "frame_for_network",
    "frame_for_image",
    "vp_angle_error",
    "inside_image",
    "BRANCHES",
]

BRANCHES: tuple[Branch, Branch] = ("vertical", "horizontal")


@dataclass
class BranchResult:
    branch: Branch
    vp: np.ndarray
    peak: tuple[int, int]
    peak_value: float
    map_shape: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "branch": self.branch,
            "vp": [float(v) for v in self.vp],
            "peak": [int(self.peak[0]), int(self.peak[1])],
            "peak_value": float(self.peak_value),
            "map_shape": [int(self.map_shape[0]), int(self.map_shape[1])],
            "at_infinity": is_at_infinity(self.vp),
        }


@dataclass
class VanishingPair:
    horizontal_vp: np.ndarray
    vertical_vp: np.ndarray
    w: int
    h: int
    diagnostics: dict = field(default_factory=dict)

    def flags(self) -> list[str]:
        out = []
        if inside_image(self.horizontal_vp, self.w, self.h):
            out.append("horizontal_vp_inside_image")
        if inside_image(self.vertical_vp, self.w, self.h):
            out.append("vertical_vp_inside_image")
        hv, vv = self.horizontal_vp, self.vertical_vp
        if np.linalg.norm(np.cross(hv / np.linalg.norm(hv), vv / np.linalg.norm(vv))) < 1e-12:
            out.append("vps_coincide")
        return out


@dataclass
class TargetMap:
    heatmap: np.ndarray
    center: tuple[int, int]


def inside_image(p: np.ndarray, w: float, h: float) -> bool:
    """Whether homogeneous ``p`` lies strictly inside the pixel rectangle."""
    if is_at_infinity(p):
        return False
    x, y = p[0] / p[2], p[1] / p[2]
    return bool(-0.5 < x < w - 0.5 and -0.5 < y < h - 0.5)


def vp_angle_error(p_true: np.ndarray, p_est: np.ndarray, w: float, h: float) -> float:
    """Angle in degrees between the lines joining the image centre to two points.

    Lines are undirected, so the result lies in ``[0, 90]``; points at
    infinity contribute their direction.
    """
    c = np.array([(w - 1) / 2.0, (h - 1) / 2.0])

    def direction(p):
        p = np.asarray(p, dtype=float)
        return p[:2] - c * p[2]

    a, b = direction(p_true), direction(p_est)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 90.0
    # atan2 keeps full precision for small angles, unlike arccos
    return float(np.degrees(np.arctan2(abs(a[0] * b[1] - a[1] * b[0]), abs(float(a @ b)))))


# -- raster <-> continuous ---------------------------------------------------------


def raster_to_continuous(space: Quadrant | str, n: int, rounding: float = 0.25) -> np.ndarray:
    """Affine map from raster ``(s, alpha, 1)`` of a joined map to continuous Hough coordinates.

    ``n`` is the (padded) integration length.  ``rounding`` is the column
    lost to round-half-down of the skew: 0.5 on odd rows, 0 on even rows and
    0.25 on average along a line.
    """
    q = Quadrant(space)
    k = n / (n - 1.0) if n > 1 else 1.0
    shear = (k - 1.0) / 2.0
    if q is Quadrant.H12:
        # alpha_c = n + k (alpha_r - n); s_c = s_r + rounding - (alpha_c - alpha_r) / 2
        return np.array([[1.0, -shear, rounding + shear * n], [0.0, k, n * (1 - k)], [0.0, 0.0, 1.0]])
    if q is Quadrant.H34:
        return np.array([[1.0, shear, rounding - shear * n], [0.0, k, n * (1 - k)], [0.0, 0.0, 1.0]])
    raise ValueError(f"needs H12 or H34, got {q.value}")


def _affine_xy(chain: CoordChain) -> np.ndarray:
    return chain.matrix()


@dataclass(frozen=True)
class DoubleHoughFrame:
    """Coordinate chain between a double-Hough output grid and the source image.

    ``pre``: FHT1-input pixel -> image pixel; ``mid``: FHT2-input pixel ->
    FHT1-output raster; ``post``: output cell -> FHT2-output raster.  All act
    on ``(x=col, y=row, 1)``.
    """

    branch: Branch
    pre: np.ndarray
    mid: np.ndarray
    post: np.ndarray
    fht1_in: tuple[int, int]  # unpadded (h, w)
    fht2_in: tuple[int, int]
    out_shape: tuple[int, int]

    @property
    def first(self) -> Quadrant:
        return first_space(self.branch)

    @property
    def n1(self) -> int:
        h, w = self.fht1_in
        return next_power_of_two(h if self.first is Quadrant.H12 else w)

    @property
    def n2(self) -> int:
        return next_power_of_two(self.fht2_in[1])

    @property
    def effective_dims(self) -> tuple[int, int]:
        """``(w, h)`` of the first FHT input after padding its integration axis."""
        h, w = self.fht1_in
        if self.first is Quadrant.H12:
            return w, self.n1
        return self.n1, h

    def _unnormalized_vp(self, row: float, col: float, parity: float) -> np.ndarray:
        s2, a2, _ = self.post @ np.array([col, row, 1.0])
        c2 = raster_to_continuous(Quadrant.H34, self.n2, parity) @ np.array([s2, a2, 1.0])
        line_j = np.linalg.solve(line_to_hough_matrix(Quadrant.H34, self.n2, 0), c2)
        line_r1 = np.linalg.solve(self.mid.T, line_j)
        line_c1 = np.linalg.solve(raster_to_continuous(self.first, self.n1).T, line_r1)
        w_e, h_e = self.effective_dims
        big_w, _ = second_dims(self.branch, w_e, h_e)
        s, alpha, q = line_to_hough_matrix(Quadrant.H34, big_w, 0) @ line_c1
        return self.pre @ back_project(s, alpha, self.branch, w_e, h_e, q=q)

    def output_to_vp(
        self, row: float, col: float, snap: bool = True, span: tuple[float, float] | None = None
    ) -> np.ndarray:
        """Homogeneous image point of output cell ``(row, col)``.

        The map is linear in ``(col, row, 1)``, so with ``snap`` a cell
        whose row extent straddles the vanishing line returns the point at
        infinity inside it: parallel lines are the simplest explanation of
        a peak in that cell.  ``span`` widens the tested extent to rows
        ``span[0] - 0.5 .. span[1] + 0.5`` (e.g. a run of tied maxima).
        """
        _, a2, _ = self.post @ np.array([col, row, 1.0])
        parity = 0.5 * (round(a2) % 2) if float(a2).is_integer() else 0.25
        p = self._unnormalized_vp(row, col, parity)
        if snap:
            r_lo, r_hi = span if span is not None else (row, row)
            lo = self._unnormalized_vp(r_lo - 0.5, col, parity)
            hi = self._unnormalized_vp(r_hi + 0.5, col, parity)
            if lo[2] == 0 or hi[2] == 0 or np.sign(lo[2]) != np.sign(hi[2]):
                t = lo[2] / (lo[2] - hi[2]) if lo[2] != hi[2] else 0.0
                p = lo + t * (hi - lo)
                p[2] = 0.0
        return p / np.linalg.norm(p)

    def vp_to_output(self, p: np.ndarray) -> tuple[float, float]:
        """Continuous output ``(row, col)`` of homogeneous image point ``p``."""
        pf = np.linalg.solve(self.pre, np.asarray(p, dtype=float))
        w_e, h_e = self.effective_dims
        line_c1 = hough_line_of_point(pf, self.first, w_e, h_e)
        line_r1 = raster_to_continuous(self.first, self.n1).T @ line_c1
        line_j = self.mid.T @ line_r1
        c2 = line_to_hough_matrix(Quadrant.H34, self.n2, 0) @ line_j
        r2 = np.linalg.solve(raster_to_continuous(Quadrant.H34, self.n2), c2)
        out = np.linalg.solve(self.post, r2)
        if abs(out[2]) < 1e-12 * max(abs(out[0]), abs(out[1]), 1.0):
            return float("inf"), float("inf")
        return float(out[1] / out[2]), float(out[0] / out[2])


def frame_for_image(branch: Branch, h: int, w: int) -> DoubleHoughFrame:
    """Frame of the classical detector: both transforms applied directly."""
    q1 = first_space(branch)
    n1 = next_power_of_two(h if q1 is Quadrant.H12 else w)
    a1, s1 = (2 * n1, w + n1) if q1 is Quadrant.H12 else (2 * n1, h + n1)
    n2 = next_power_of_two(s1)
    eye = np.eye(3)
    return DoubleHoughFrame(branch, eye, eye, eye, (h, w), (a1, s1), (2 * n2, a1 + n2))


def frame_for_network(net: HoughNet, h: int, w: int) -> DoubleHoughFrame:
    g = net.geometry(h, w)
    return DoubleHoughFrame(
        net.branch,
        _affine_xy(g.pre),
        _affine_xy(g.mid),
        _affine_xy(g.post),
        g.fht1_in,
        g.fht2_in,
        g.out_shape,
    )


# -- peaks ------------------------------------------------------------------------


def tied_rows(m: np.ndarray, peak: tuple[int, int], rtol: float = 1e-12) -> tuple[int, int]:
    """Row range of maxima tied with ``peak`` in its column, linked by gaps of at most one row.

    Round-half-down skew makes tied rows alternate with slightly lower odd
    rows, hence the one-row gaps.
    """
    row, col = peak
    column = np.asarray(m, dtype=float)
    column = column[0] if column.ndim == 3 else column
    column = column[:, col]
    top = column[row]
    tied = np.abs(column - top) <= rtol * max(abs(top), 1e-300)
    lo = hi = row
    while lo - 1 >= 0 and (tied[lo - 1] or (lo - 2 >= 0 and tied[lo - 2])):
        lo = lo - 1 if tied[lo - 1] else lo - 2
    while hi + 1 < len(column) and (tied[hi + 1] or (hi + 2 < len(column) and tied[hi + 2])):
        hi = hi + 1 if tied[hi + 1] else hi + 2
    return lo, hi


def extract_peak(m: np.ndarray) -> tuple[int, int]:
    """Global argmax of a 2-D map (or ``1 x H x W`` tensor); ties -> smallest row, then column."""
    m = np.asarray(m, dtype=float)
    if m.ndim == 3 and m.shape[0] == 1:
        m = m[0]
    if m.ndim != 2 or m.size == 0:
        raise InvalidMapError(f"expected a non-empty 2-D map, got shape {m.shape}")
    if np.all(np.isnan(m)):
        raise InvalidMapError("map is entirely NaN")
    idx = int(np.nanargmax(m))
    return divmod(idx, m.shape[1])


def refine_peak(m: np.ndarray, peak: tuple[int, int], radius: int = 2) -> tuple[float, float]:
    """Value-weighted centroid of the ``(2 radius + 1)``-square window around ``peak``.

    Negative values are ignored; a window with no positive mass returns ``peak``.
    """
    m = np.asarray(m, dtype=float)
    m = m[0] if m.ndim == 3 else m
    row, col = peak
    r0, r1 = max(0, row - radius), min(m.shape[0], row + radius + 1)
    c0, c1 = max(0, col - radius), min(m.shape[1], col + radius + 1)
    win = np.clip(np.nan_to_num(m[r0:r1, c0:c1]), 0.0, None)
    total = win.sum()
    if radius <= 0 or total <= 0:
        return float(row), float(col)
    ys, xs = np.mgrid[r0:r1, c0:c1]
    return float((win * ys).sum() / total), float((win * xs).sum() / total)


# -- classical detector -------------------------------------------------------------


def edge_map(img: np.ndarray, percentile: float = 90.0, branch: Branch | None = None) -> np.ndarray:
    """Central-difference gradient magnitude, zeroed below the given percentile.

    With ``branch`` only the gradient component across that branch's lines
    is kept: ``|d/dx|`` for mostly vertical lines, ``|d/dy|`` for mostly
    horizontal ones.  On text pages this stops the dense horizontal stroke
    edges from swamping the vertical pencil.
    """
    img = np.asarray(img, dtype=np.float64)
    gy, gx = np.gradient(img)
    if branch is None:
        mag = np.hypot(gx, gy)
    elif first_space(branch) is Quadrant.H12:
        mag = np.abs(gx)
    else:
        mag = np.abs(gy)
    if not np.any(mag > 0):
        raise NoStructureError("image has no intensity gradients")
    thr = np.percentile(mag, percentile)
    out = np.where(mag >= thr, mag, 0.0)
    if thr == 0:
        out = np.where(mag > 0, mag, 0.0)
    return out


def classical_branch(edges: np.ndarray, branch: Branch, power: float = 2.0) -> BranchResult:
    """Double FHT of an edge map for one branch."""
    h, w = edges.shape
    q1 = first_space(branch)
    first = hough_transform(pad_integration_axis(edges, q1), q1)
    top = first.max()
    if top > 0:
        first = first / top
    first = first**power
    second = hough_transform(pad_integration_axis(first, Quadrant.H34), Quadrant.H34)
    row, col = extract_peak(second)
    frame = frame_for_image(branch, h, w)
    vp = frame.output_to_vp(row, col, span=tied_rows(second, (row, col)))
    return BranchResult(branch, vp, (row, col), float(second[row, col]), second.shape)


def classical_detect(
    img: np.ndarray, *, edge_percentile: float = 90.0, power: float = 2.0, oriented: bool = True
) -> VanishingPair:
    """Non-learned double-Hough detector of both vanishing points.

    ``oriented=False`` feeds the full gradient magnitude to both branches.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    results = {}
    for b in BRANCHES:
        edges = edge_map(img, edge_percentile, b if oriented else None)
        results[b] = classical_branch(edges, b, power)
    pair = VanishingPair(
        results["horizontal"].vp,
        results["vertical"].vp,
        w,
        h,
        {b: r.to_dict() for b, r in results.items()},
    )
    for flag in pair.flags():
        log.warning("classical_detect: %s", flag)
    return pair


# -- network --------------------------------------------------------------------------


def network_branch(img: np.ndarray, net: HoughNet, radius: int = 2) -> BranchResult:
    """Network vanishing point of one branch; the argmax is refined by the
    centroid of the ``radius`` window, matching the block-shaped targets."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    out = net.forward(img[None])
    row, col = extract_peak(out)
    rf, cf = refine_peak(out, (row, col), radius)
    vp = frame_for_network(net, h, w).output_to_vp(rf, cf, span=tied_rows(out, (row, col)))
    return BranchResult(net.branch, vp, (row, col), float(out[0, row, col]), out.shape[-2:])


def network_detect(img: np.ndarray, net_v: HoughNet, net_h: HoughNet, radius: int = 2) -> VanishingPair:
    """Run both network branches and back-project their refined output peaks."""
    if net_v.branch != "vertical" or net_h.branch != "horizontal":
        raise ValueError("expected (vertical, horizontal) networks")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    rv = network_branch(img, net_v, radius)
    rh = network_branch(img, net_h, radius)
    pair = VanishingPair(rh.vp, rv.vp, w, h, {"vertical": rv.to_dict(), "horizontal": rh.to_dict()})
    for flag in pair.flags():
        log.warning("network_detect: %s", flag)
    return pair


def make_target(vp: np.ndarray, branch: Branch, net: HoughNet, h: int, w: int, size: int = 5) -> TargetMap:
    """Zero map of the branch output shape with a one-filled ``size x size`` block at ``vp``."""
    if net.branch != branch:
        raise ValueError(f"network is the {net.branch} branch, not {branch}")
    frame = frame_for_network(net, h, w)
    row, col = frame.vp_to_output(vp)
    oh, ow = frame.out_shape
    if not (np.isfinite(row) and np.isfinite(col)):
        raise UnrepresentableTargetError(f"{branch} vp maps to infinity in the output grid")
    r, c = int(np.floor(row + 0.5)), int(np.floor(col + 0.5))
    if not (0 <= r < oh and 0 <= c < ow):
        raise UnrepresentableTargetError(f"{branch} vp maps to cell {(r, c)} outside grid {(oh, ow)}")
    heat = np.zeros((oh, ow))
    half = size // 2
    heat[max(0, r - half) : r + half + 1, max(0, c - half) : c + half + 1] = 1.0
    return TargetMap(heat, (r, c))
