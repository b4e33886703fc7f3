"""Synthetic images with exact vanishing points: line bundles and
projectively distorted text pages."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import RegimeError
from .pipeline import inside_image
from .rectify import Quad, transform_points

__all__ = [
    "SynthSample",
    "gen_line_bundle",
    "gen_document",
    "sample_vp",
    "salt_and_pepper",
    "render_lines",
    "page_homography",
]


@dataclass
class SynthSample:
    image: np.ndarray
    quad: Quad
    horizontal_vp: np.ndarray
    vertical_vp: np.ndarray
    seed: int
    params: dict = field(default_factory=dict)

    def sidecar(self, image_name: str, split: str = "train") -> dict:
        h, w = self.image.shape
        return {
            "schema": "houghvp-sample",
            "version": 1,
            "image": image_name,
            "width": w,
            "height": h,
            "split": split,
            "quad": self.quad.tolist(),
            "vps": {"horizontal": self.horizontal_vp.tolist(), "vertical": self.vertical_vp.tolist()},
            "seed": self.seed,
            "params": self.params,
        }


def sample_vp(
    rng: np.random.Generator,
    w: int,
    h: int,
    branch: str,
    dist_range: tuple[float, float] = (1.5, 20.0),
    max_tilt: float = 30.0,
) -> np.ndarray:
    """Random vanishing point at a log-uniform distance (in image diagonals)
    from the centre, within ``max_tilt`` degrees of the branch axis."""
    diag = float(np.hypot(w, h))
    dist = diag * float(np.exp(rng.uniform(np.log(dist_range[0]), np.log(dist_range[1]))))
    tilt = np.radians(rng.uniform(-max_tilt, max_tilt))
    sign = 1.0 if rng.random() < 0.5 else -1.0
    if branch == "vertical":
        d = np.array([np.sin(tilt), np.cos(tilt)]) * sign
    elif branch == "horizontal":
        d = np.array([np.cos(tilt), np.sin(tilt)]) * sign
    else:
        raise ValueError(f"unknown branch {branch!r}")
    c = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
    x, y = c + dist * d
    return np.array([x, y, 1.0])


def render_lines(h: int, w: int, lines: list[tuple[np.ndarray, np.ndarray]], width: float = 1.0) -> np.ndarray:
    """Anti-aliased lines given as ``(point, direction)``; tent profile of the given width."""
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    img = np.zeros((h, w))
    for p, d in lines:
        d = np.asarray(d, dtype=float)
        d = d / np.linalg.norm(d)
        dist = np.abs((xs - p[0]) * d[1] - (ys - p[1]) * d[0])
        img = np.maximum(img, np.clip(1.0 - dist / width, 0.0, 1.0))
    return img


def gen_line_bundle(
    vp: np.ndarray,
    n_lines: int,
    w: int,
    h: int,
    *,
    noise: float = 0.0,
    clutter: int = 0,
    seed: int = 0,
    spread: float = 0.7,
) -> np.ndarray:
    """Image of ``n_lines`` lines through ``vp`` with evenly spread intercepts.

    The intercepts lie on the central row when the vanishing point is mostly
    above or below the image and on the central column otherwise.
    """
    vp = np.asarray(vp, dtype=float)
    if n_lines < 2:
        raise ValueError("need at least two lines")
    if inside_image(vp, w, h):
        raise RegimeError("vanishing point lies inside the image")
    rng = np.random.default_rng(seed)
    c = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
    direction = vp[:2] - c * vp[2]
    lo, hi = 0.5 - spread / 2, 0.5 + spread / 2
    lines = []
    if abs(direction[1]) >= abs(direction[0]):
        anchors = [np.array([x, c[1]]) for x in np.linspace(lo * (w - 1), hi * (w - 1), n_lines)]
    else:
        anchors = [np.array([c[0], y]) for y in np.linspace(lo * (h - 1), hi * (h - 1), n_lines)]
    for a in anchors:
        d = vp[:2] - a * vp[2]
        lines.append((a, d))
    for _ in range(clutter):
        p = rng.uniform([0, 0], [w, h])
        ang = rng.uniform(0, np.pi)
        lines.append((p, np.array([np.cos(ang), np.sin(ang)])))
    img = render_lines(h, w, lines[:n_lines])
    if clutter:
        seg = np.zeros((h, w))
        ys, xs = np.mgrid[0:h, 0:w].astype(float)
        for p, d in lines[n_lines:]:
            length = rng.uniform(0.05, 0.2) * max(w, h)
            t = (xs - p[0]) * d[0] + (ys - p[1]) * d[1]
            dist = np.abs((xs - p[0]) * d[1] - (ys - p[1]) * d[0])
            seg = np.maximum(seg, np.clip(1.0 - dist, 0, 1) * (np.abs(t) < length / 2))
        img = np.maximum(img, seg)
    if noise > 0:
        img = img + rng.normal(0.0, noise, size=img.shape)
    return img


def salt_and_pepper(img: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    out = np.array(img, dtype=float)
    mask = rng.random(out.shape) < fraction
    out[mask] = (rng.random(int(mask.sum())) < 0.5).astype(float)
    return out


# -- documents -------------------------------------------------------------------


def page_homography(vh: np.ndarray, vv: np.ndarray, w: int, h: int) -> np.ndarray:
    """Map from centred page coordinates to the image with the given vanishing points.

    The page x axis maps to lines through ``vh``, the y axis to lines
    through ``vv``; the page origin maps to the image centre with unit scale
    and positive orientation along both axes there.
    """
    c = np.array([(w - 1) / 2.0, (h - 1) / 2.0, 1.0])
    cols = []
    for v, axis in ((vh, 0), (vv, 1)):
        v = np.asarray(v, dtype=float)
        tangent = v[:2] - c[:2] * v[2]
        lam = 1.0 / np.linalg.norm(tangent)
        if tangent[axis] < 0:
            lam = -lam
        cols.append(lam * v)
    return np.column_stack([cols[0], cols[1], c])


def _page_texture(X: np.ndarray, Y: np.ndarray, a: float, b: float, rng_rows: list, pitch: float) -> np.ndarray:
    """Page intensity at page coordinates; outside the page returns NaN."""
    inside = (np.abs(X) <= a) & (np.abs(Y) <= b)
    val = np.full(X.shape, np.nan)
    val[inside] = 0.9
    margin = 0.12 * a
    stroke = 0.35 * pitch
    for y_row, words in rng_rows:
        in_row = inside & (np.abs(Y - y_row) <= stroke / 2)
        if not np.any(in_row):
            continue
        for x0, x1 in words:
            sel = in_row & (X >= -a + margin + x0) & (X <= -a + margin + x1)
            val[sel] = 0.15
    return val


def gen_document(
    seed: int,
    w: int = 128,
    h: int = 128,
    distortion: float = 1.0,
    *,
    clutter: bool = False,
    stroke_density: float = 0.8,
    page_fraction: float = 0.75,
    dist_range: tuple[float, float] = (1.5, 20.0),
    max_tilt: float = 20.0,
    supersample: int = 3,
    max_tries: int = 50,
) -> SynthSample:
    """Projectively distorted page with text-like stroke rows and exact vanishing points.

    ``distortion`` in ``[0, 1]`` scales the tilt range and divides the
    vanishing point distances; ``0`` gives a fronto-parallel page.
    """
    rng = np.random.default_rng(seed)
    a = page_fraction * (w - 1) / 2.0 * rng.uniform(0.85, 1.0)
    b = page_fraction * (h - 1) / 2.0 * rng.uniform(0.85, 1.0)
    page = np.array([[-a, -b], [a, -b], [a, b], [-a, b]])
    for _ in range(max_tries):
        if distortion <= 0:
            vh, vv = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
        else:
            rng_d = (dist_range[0] / distortion, dist_range[1] / distortion)
            vh = sample_vp(rng, w, h, "horizontal", rng_d, max_tilt * distortion)
            vv = sample_vp(rng, w, h, "vertical", rng_d, max_tilt * distortion)
        m = page_homography(vh, vv, w, h)
        wcomp = np.c_[page, np.ones(4)] @ m[2]
        if np.any(wcomp <= 0.2):
            continue
        corners = transform_points(m, page)
        quad = Quad(corners)
        outside = np.sum((corners[:, 0] < 0) | (corners[:, 0] > w - 1) | (corners[:, 1] < 0) | (corners[:, 1] > h - 1))
        if outside > 1 or not quad.is_simple() or quad.signed_area() <= 0:
            continue
        if inside_image(vh, w, h) or inside_image(vv, w, h):
            continue
        break
    else:
        raise RegimeError(f"no valid distortion after {max_tries} draws (seed {seed})")

    pitch = max(2.5, 0.07 * min(a, b) * 2)
    rows = []
    y = -b + 1.5 * pitch
    while y < b - pitch:
        if rng.random() < stroke_density:
            words = []
            x = 0.0
            span = 2 * a * 0.76
            while x < span:
                length = rng.uniform(0.08, 0.3) * span
                words.append((x, min(x + length, span)))
                x += length + rng.uniform(0.02, 0.05) * span
            rows.append((y, words))
        y += pitch

    minv = np.linalg.inv(m)
    k = supersample
    offs = (np.arange(k) + 0.5) / k - 0.5
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    bg_rng = np.random.default_rng(seed + 7919)
    base = 0.3
    if clutter:
        coarse = bg_rng.random((max(2, h // 16), max(2, w // 16)))
        gy = np.linspace(0, coarse.shape[0] - 1, h)
        gx = np.linspace(0, coarse.shape[1] - 1, w)
        from .rectify import bilinear_sample

        GX, GY = np.meshgrid(gx, gy)
        background = 0.2 + 0.25 * bilinear_sample(coarse, GX, GY)
    else:
        background = np.full((h, w), base)
    acc = np.zeros((h, w))
    for dy in offs:
        for dx in offs:
            px, py = xs + dx, ys + dy
            q = minv @ np.stack([px.ravel(), py.ravel(), np.ones(px.size)])
            with np.errstate(divide="ignore", invalid="ignore"):
                X = (q[0] / q[2]).reshape(h, w)
                Y = (q[1] / q[2]).reshape(h, w)
            behind = (q[2] <= 0).reshape(h, w)
            tex = _page_texture(X, Y, a, b, rows, pitch)
            tex[behind] = np.nan
            acc += np.where(np.isnan(tex), background, tex)
    img = acc / (k * k)
    params = {
        "w": w,
        "h": h,
        "distortion": distortion,
        "clutter": clutter,
        "stroke_density": stroke_density,
        "page_fraction": page_fraction,
        "dist_range": list(dist_range),
        "max_tilt": max_tilt,
    }
    return SynthSample(img, quad, vh, vv, seed, params)
