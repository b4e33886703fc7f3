"""Dyadic Fast Hough Transform.

Every quadrant map is computed by the butterfly recursion over power-of-two
strips and costs O(n^2 log n).  Images are ``(h, w)`` float arrays indexed
``[y, x]``; pixel centres sit on integer coordinates.  All array-level
functions accept arbitrary leading batch dimensions, which is what the
network layer relies on.

Quadrant layouts (``n`` is the integration length, ``t`` the row index):

* ``H1``: lines ``(x0, 0)-(x0 + t, h - 1)``, column ``c = x0 + h``.
* ``H2``: lines ``(x0, 0)-(x0 - t, h - 1)``, column ``c = x0``.
* ``H3``: lines ``(0, y0)-(w - 1, y0 - t)``, column ``c = y0``.
* ``H4``: lines ``(0, y0)-(w - 1, y0 + t)``, column ``c = y0 + w``.

Every quadrant map has ``w + h`` columns.  The joined maps place row
``alpha`` and column ``s`` as in the Hough coordinate algebra (see
:mod:`houghvp.geometry`), with the half-integer skew rounded half down.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

__all__ = [
    "Quadrant",
    "HoughMap",
    "dyadic_pattern",
    "fht_quadrant",
    "fht_join",
    "brute_force_hough",
    "hough_transform",
    "hough_transform_adjoint",
    "hough_shape",
    "is_power_of_two",
    "next_power_of_two",
    "pad_integration_axis",
]


class Quadrant(str, enum.Enum):
    H1 = "H1"
    H2 = "H2"
    H3 = "H3"
    H4 = "H4"
    H12 = "H12"
    H34 = "H34"

    @property
    def joined(self) -> bool:
        return self in (Quadrant.H12, Quadrant.H34)

    @property
    def mostly_vertical(self) -> bool:
        return self in (Quadrant.H1, Quadrant.H2, Quadrant.H12)


@dataclass(frozen=True)
class HoughMap:
    """Accumulator raster of one quadrant or one joined pair.

    ``data`` has shape ``(alpha_size, s_size)``; ``src_w``/``src_h`` are the
    dimensions of the transformed image.
    """

    quadrant: Quadrant
    data: np.ndarray
    src_w: int
    src_h: int

    @property
    def alpha_size(self) -> int:
        return self.data.shape[0]

    @property
    def s_size(self) -> int:
        return self.data.shape[1]


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_power_of_two(n: int) -> int:
    if n < 1:
        raise DimensionError(f"size must be positive, got {n}")
    return 1 << (int(n) - 1).bit_length()


def dyadic_pattern(n: int, t: int) -> np.ndarray:
    """Per-row horizontal offsets of the dyadic line of height ``n``, shift ``t``.

    >>> dyadic_pattern(4, 2).tolist()
    [0, 1, 1, 2]
    """
    if not is_power_of_two(n):
        raise DimensionError(f"pattern height must be a power of two, got {n}")
    if not 0 <= t < n:
        raise DimensionError(f"shift must lie in [0, {n}), got {t}")
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    half = dyadic_pattern(n // 2, t // 2)
    return np.concatenate([half, half + (t - t // 2)])


def _integration_length(q: Quadrant, h: int, w: int) -> int:
    return h if q.mostly_vertical else w


def _check_axis(q: Quadrant, shape: tuple[int, ...]) -> None:
    if len(shape) < 2:
        raise DimensionError(f"expected an image of rank >= 2, got shape {shape}")
    h, w = shape[-2], shape[-1]
    if h < 1 or w < 1:
        raise DimensionError(f"empty image of shape {shape}")
    n = _integration_length(q, h, w)
    if not is_power_of_two(n):
        axis = "height" if q.mostly_vertical else "width"
        raise DimensionError(
            f"{q.value} integrates along the image {axis}, which must be a power "
            f"of two (got {n}); pad with pad_integration_axis first"
        )


def hough_shape(space: Quadrant | str, h: int, w: int) -> tuple[int, int]:
    """Output shape ``(alpha_size, s_size)`` of a transform of an ``h x w`` image."""
    q = Quadrant(space)
    if q is Quadrant.H12:
        return 2 * h, w + h
    if q is Quadrant.H34:
        return 2 * w, h + w
    return _integration_length(q, h, w), w + h


def pad_integration_axis(img: np.ndarray, space: Quadrant | str) -> np.ndarray:
    """Zero-pad the integration axis of ``img`` (bottom or right) to a power of two."""
    q = Quadrant(space)
    h, w = img.shape[-2:]
    axis = -2 if q.mostly_vertical else -1
    n = img.shape[axis]
    extra = next_power_of_two(n) - n
    if extra == 0:
        return img
    pad = [(0, 0)] * img.ndim
    pad[axis] = (0, extra)
    return np.pad(img, pad)


# -- butterfly --------------------------------------------------------------


# strips at most this tall are combined breadth-first; taller ones are split
# depth-first so the lower levels run on cache-sized blocks
_LEAF_ROWS = 64


def _combine(top: np.ndarray, bottom: np.ndarray) -> np.ndarray:
    """Merge the shift tables of two stacked strips of ``size`` rows each.

    ``top``/``bottom`` have shape (..., strips, size, width); the result has
    (..., strips, 2 * size, width).
    """
    size, width = top.shape[-2:]
    new = np.empty(top.shape[:-2] + (2 * size, width))
    for t in range(2 * size):
        half = t // 2
        shift = t - half
        dst = new[..., t, :]
        src = top[..., half, :]
        # reads past the right edge contribute zero
        np.add(src[..., : width - shift], bottom[..., half, shift:], out=dst[..., : width - shift])
        dst[..., width - shift :] = src[..., width - shift :]
    return new


def _butterfly(rows: np.ndarray) -> np.ndarray:
    """Shift table (..., m, width) of ``m`` padded image rows, indexed [t, c]."""
    m = rows.shape[-2]
    if m > _LEAF_ROWS:
        half = m // 2
        return _combine(_butterfly(rows[..., :half, :]), _butterfly(rows[..., half:, :]))
    acc = rows[..., :, None, :]  # (..., strips, shifts, width)
    while acc.shape[-3] > 1:
        acc = _combine(acc[..., 0::2, :, :], acc[..., 1::2, :, :])
    return acc[..., 0, :, :]


def _fht_h1(a: np.ndarray) -> np.ndarray:
    """H1 of ``a`` with shape (..., n, w); returns (..., n, w + n) indexed [t, c]."""
    n, w = a.shape[-2:]
    # the left n columns are the zero pad
    rows = np.zeros(a.shape[:-2] + (n, w + n))
    rows[..., n:] = a
    return _butterfly(rows)


def _fht_h1_adjoint(g: np.ndarray) -> np.ndarray:
    """Transpose of :func:`_fht_h1`: (..., n, w + n) -> (..., n, w)."""
    n, width = g.shape[-2:]
    lead = g.shape[:-2]
    acc = g[..., None, :, :]
    size = n // 2
    while size >= 1:
        strips = acc.shape[-3]
        old = np.zeros(lead + (2 * strips, size, width))
        top = old[..., 0::2, :, :]
        bottom = old[..., 1::2, :, :]
        for t in range(2 * size):
            half = t // 2
            shift = t - half
            top[..., :, half, :] += acc[..., :, t, :]
            bottom[..., :, half, shift:] += acc[..., :, t, : width - shift]
        acc = old
        size //= 2
    return acc[..., :, 0, n:]


def _quadrant(a: np.ndarray, q: Quadrant) -> np.ndarray:
    if q is Quadrant.H1:
        return _fht_h1(a)
    if q is Quadrant.H2:
        return _fht_h1(a[..., ::-1])[..., ::-1]
    if q is Quadrant.H4:
        return _fht_h1(np.swapaxes(a, -1, -2))
    if q is Quadrant.H3:
        return _fht_h1(np.swapaxes(a, -1, -2)[..., ::-1])[..., ::-1]
    raise ValueError(f"not a single quadrant: {q}")


def _quadrant_adjoint(g: np.ndarray, q: Quadrant) -> np.ndarray:
    if q is Quadrant.H1:
        return _fht_h1_adjoint(g)
    if q is Quadrant.H2:
        return _fht_h1_adjoint(g[..., ::-1])[..., ::-1]
    if q is Quadrant.H4:
        return np.swapaxes(_fht_h1_adjoint(g), -1, -2)
    if q is Quadrant.H3:
        return np.swapaxes(_fht_h1_adjoint(g[..., ::-1])[..., ::-1], -1, -2)
    raise ValueError(f"not a single quadrant: {q}")


# -- joining ----------------------------------------------------------------


def _join_layout(q: Quadrant, n: int):
    """Row sources and column shifts of a joined map.

    Returns ``(first, second, rows_first, rows_second, delta)`` where row
    ``alpha`` of the joined map takes quadrant row ``t`` of ``first`` for
    ``alpha in rows_first`` (``t = n - alpha``) or of ``second`` for
    ``alpha in rows_second`` (``t = alpha - n``), and joined column
    ``s = c + delta[alpha]``.  Row 0 (shift ``n``) has no dyadic line.
    """
    alpha = np.arange(2 * n)
    if q is Quadrant.H12:
        first, second = Quadrant.H1, Quadrant.H2
        # s = x0 + round_half_down(n - alpha / 2); c = x0 + n in H1, x0 in H2
        skew = n - (alpha + 1) // 2
        delta = np.where(alpha <= n, skew - n, skew)
    else:
        first, second = Quadrant.H3, Quadrant.H4
        # s = y0 + round_half_down(alpha / 2); c = y0 in H3, y0 + n in H4
        skew = alpha // 2
        delta = np.where(alpha <= n, skew, skew - n)
    rows_first = np.arange(1, n + 1)
    rows_second = np.arange(n + 1, 2 * n)
    return first, second, rows_first, rows_second, delta


def _shift_rows(m: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """``out[..., r, s] = m[..., r, s - delta[r]]`` with zero fill."""
    width = m.shape[-1]
    pad = int(np.abs(delta).max()) if delta.size else 0
    spec = [(0, 0)] * m.ndim
    spec[-1] = (pad, pad)
    mp = np.pad(m, spec)
    rows = np.arange(m.shape[-2])
    cols = np.arange(width)[None, :] - delta[:, None] + pad
    return mp[..., rows[:, None], cols]


def _join(a: np.ndarray, q: Quadrant) -> np.ndarray:
    n = _integration_length(q, *a.shape[-2:])
    first, second, rf, rs, delta = _join_layout(q, n)
    qa = _quadrant(a, first)
    qb = _quadrant(a, second)
    stacked = np.zeros(a.shape[:-2] + (2 * n, qa.shape[-1]), dtype=qa.dtype)
    stacked[..., rf, :] = qa[..., n - rf, :]
    stacked[..., rs, :] = qb[..., rs - n, :]
    return _shift_rows(stacked, delta)


def _join_adjoint(g: np.ndarray, q: Quadrant, h: int, w: int) -> np.ndarray:
    n = _integration_length(q, h, w)
    first, second, rf, rs, delta = _join_layout(q, n)
    back = _shift_rows(g, -delta)
    ga = np.zeros(g.shape[:-2] + (n, g.shape[-1]), dtype=g.dtype)
    gb = np.zeros_like(ga)
    ga[..., n - rf, :] = back[..., rf, :]
    gb[..., rs - n, :] = back[..., rs, :]
    return _quadrant_adjoint(ga, first) + _quadrant_adjoint(gb, second)


# -- public array API -------------------------------------------------------


def hough_transform(a: np.ndarray, space: Quadrant | str) -> np.ndarray:
    """FHT of an ``(..., h, w)`` array into quadrant or joined ``space``."""
    q = Quadrant(space)
    a = np.asarray(a, dtype=np.float64)
    _check_axis(q, a.shape)
    if q.joined:
        return _join(a, q)
    return _quadrant(a, q)


def hough_transform_adjoint(
    g: np.ndarray, space: Quadrant | str, h: int, w: int
) -> np.ndarray:
    """Exact transpose of :func:`hough_transform` for ``h x w`` inputs."""
    q = Quadrant(space)
    g = np.asarray(g, dtype=np.float64)
    _check_axis(q, (h, w))
    expected = hough_shape(q, h, w)
    if g.shape[-2:] != expected:
        raise DimensionError(f"gradient shape {g.shape[-2:]} != map shape {expected}")
    if q.joined:
        return _join_adjoint(g, q, h, w)
    return _quadrant_adjoint(g, q)


def fht_quadrant(img: np.ndarray, q: Quadrant | str) -> HoughMap:
    """Fast Hough transform of a single quadrant ``H1``..``H4``."""
    q = Quadrant(q)
    if q.joined:
        raise ValueError(f"{q.value} is a joined map; use fht_join")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(f"expected a 2-D image, got shape {img.shape}")
    return HoughMap(q, hough_transform(img, q), img.shape[1], img.shape[0])


def fht_join(img: np.ndarray, pair: Quadrant | str) -> HoughMap:
    """Joined ``H12`` (mostly vertical lines) or ``H34`` (mostly horizontal) map."""
    q = Quadrant(pair)
    if not q.joined:
        raise ValueError(f"{q.value} is not a joined map; use fht_quadrant")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(f"expected a 2-D image, got shape {img.shape}")
    return HoughMap(q, hough_transform(img, q), img.shape[1], img.shape[0])


def brute_force_hough(img: np.ndarray, q: Quadrant | str) -> HoughMap:
    """Direct summation along every dyadic line; O(n^3) reference."""
    q = Quadrant(q)
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(f"expected a 2-D image, got shape {img.shape}")
    _check_axis(q, img.shape)
    h, w = img.shape
    if q.joined:
        return HoughMap(q, _brute_join(img, q), w, h)
    n = _integration_length(q, h, w)
    out = np.zeros((n, w + h))
    c = np.arange(w + h)[None, :]
    k = np.arange(n)[:, None]
    for t in range(n):
        p = dyadic_pattern(n, t)[:, None]
        if q is Quadrant.H1:
            ys, xs = np.broadcast_to(k, (n, w + h)), c - n + p
        elif q is Quadrant.H2:
            ys, xs = np.broadcast_to(k, (n, w + h)), c - p
        elif q is Quadrant.H4:
            ys, xs = c - n + p, np.broadcast_to(k, (n, w + h))
        else:
            ys, xs = c - p, np.broadcast_to(k, (n, w + h))
        ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        out[t] = np.where(ok, img[np.where(ok, ys, 0), np.where(ok, xs, 0)], 0.0).sum(axis=0)
    return HoughMap(q, out, w, h)


def _brute_join(img: np.ndarray, q: Quadrant) -> np.ndarray:
    h, w = img.shape
    n = _integration_length(q, h, w)
    out = np.zeros(hough_shape(q, h, w))
    vertical = q is Quadrant.H12
    for alpha in range(1, 2 * n):
        slope = n - alpha  # x1 - x0 (H12) or y0 - y1 (H34)
        t = abs(slope)
        p = dyadic_pattern(n, t)
        sign = 1 if slope >= 0 else -1
        if vertical:
            skew = int(np.ceil(n - alpha / 2 - 0.5))  # round half down
        else:
            skew = int(np.ceil(alpha / 2 - 0.5))
        for s in range(out.shape[1]):
            start = s - skew  # x0 or y0
            total = 0.0
            for k in range(n):
                if vertical:
                    x, y = start + sign * p[k], k
                else:
                    x, y = k, start - sign * p[k]
                if 0 <= x < w and 0 <= y < h:
                    total += img[y, x]
            out[alpha, s] = total
    return out
