"""Minimal differentiable layer stack for HoughNet.

Tensors are numpy arrays shaped ``(N, C, H, W)``; the single-sample layer
functions also accept ``(C, H, W)``.  Convolutions are valid
cross-correlations without bias.  The FHT layer is linear and parameter
free; its backward pass is the exact transpose computed by
:func:`houghvp.fht.hough_transform_adjoint`.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass, field
from typing import Literal, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, TrainingDivergenceError
from .fht import Quadrant, hough_shape, hough_transform, hough_transform_adjoint, next_power_of_two
from .geometry import Branch, ConvGeometry, CoordChain

__all__ = [
    "LayerSpec",
    "NetworkSpec",
    "HoughNet",
    "NetGeometry",
    "conv_forward",
    "conv_backward",
    "fht_layer_forward",
    "fht_layer_backward",
    "one_minus_rbf",
    "one_minus_rbf_grad",
    "relu",
    "l2_loss",
    "build_houghnet",
    "param_count",
    "glorot_uniform",
    "SGD",
    "sgd_step",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
]

CHECKPOINT_VERSION = 1

LayerKind = Literal["conv", "relu", "fht", "one_minus_rbf"]


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    filters: int = 0
    kernel: tuple[int, int] = (1, 1)
    stride: tuple[int, int] = (1, 1)
    activation: str | None = None  # conv only: "relu" | "one_minus_rbf" | None
    space: str | None = None  # fht only: "H12" | "H34"

    def geometry(self) -> ConvGeometry:
        if self.kind == "conv":
            return ConvGeometry(self.kernel, self.stride)
        return ConvGeometry()


@dataclass(frozen=True)
class NetworkSpec:
    branch: Branch
    layers: tuple[LayerSpec, ...]
    in_channels: int = 1

    def to_dict(self) -> dict:
        return {
            "branch": self.branch,
            "in_channels": self.in_channels,
            "layers": [asdict(layer) for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        layers = []
        for item in d["layers"]:
            item = dict(item)
            item["kernel"] = tuple(item["kernel"])
            item["stride"] = tuple(item["stride"])
            layers.append(LayerSpec(**item))
        return cls(d["branch"], tuple(layers), d.get("in_channels", 1))


# -- primitive layers -------------------------------------------------------


def _as4d(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise DimensionError(f"expected (C, H, W) or (N, C, H, W), got shape {x.shape}")


def _conv_out(size: int, k: int, stride: int) -> int:
    return (size - k) // stride + 1


def _patches(x: np.ndarray, kernel: tuple[int, int], stride: tuple[int, int]) -> np.ndarray:
    kh, kw = kernel
    sh, sw = stride
    view = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return view[:, :, ::sh, ::sw]  # (N, C, Ho, Wo, kh, kw)


def conv_forward(x: np.ndarray, weights: np.ndarray, stride: tuple[int, int] = (1, 1)) -> np.ndarray:
    """Valid, bias-free cross-correlation; ``weights`` is ``(F, C, kh, kw)``."""
    x4, squeeze = _as4d(x)
    f, c, kh, kw = weights.shape
    if x4.shape[1] != c:
        raise DimensionError(f"input has {x4.shape[1]} channels, weights expect {c}")
    if x4.shape[2] < kh or x4.shape[3] < kw:
        raise DimensionError(f"input {x4.shape[2:]} smaller than kernel {(kh, kw)}")
    p = _patches(x4, (kh, kw), stride)
    y = np.tensordot(p, weights, axes=([1, 4, 5], [1, 2, 3]))  # (N, Ho, Wo, F)
    y = np.ascontiguousarray(y.transpose(0, 3, 1, 2))
    return y[0] if squeeze else y


def conv_backward(
    grad_out: np.ndarray, x: np.ndarray, weights: np.ndarray, stride: tuple[int, int] = (1, 1)
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients ``(grad_x, grad_w)`` of :func:`conv_forward`."""
    x4, squeeze = _as4d(x)
    g4, _ = _as4d(grad_out)
    f, c, kh, kw = weights.shape
    sh, sw = stride
    ho, wo = _conv_out(x4.shape[2], kh, sh), _conv_out(x4.shape[3], kw, sw)
    if g4.shape != (x4.shape[0], f, ho, wo):
        raise DimensionError(f"grad shape {g4.shape} != output shape {(x4.shape[0], f, ho, wo)}")
    p = _patches(x4, (kh, kw), stride)
    grad_w = np.tensordot(g4, p, axes=([0, 2, 3], [0, 2, 3]))  # (F, C, kh, kw)
    grad_x = np.zeros_like(x4)
    for i in range(kh):
        for j in range(kw):
            contrib = np.tensordot(weights[:, :, i, j], g4, axes=([0], [1]))  # (C, N, Ho, Wo)
            grad_x[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += contrib.transpose(1, 0, 2, 3)
    return (grad_x[0] if squeeze else grad_x), grad_w


def fht_layer_forward(x: np.ndarray, space: Quadrant | str) -> np.ndarray:
    """Per-channel joined FHT; the integration axis is zero-padded to a power of two."""
    q = Quadrant(space)
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape[-2:]
    ph, pw = _padded_dims(q, h, w)
    if (ph, pw) != (h, w):
        pad = [(0, 0)] * (x.ndim - 2) + [(0, ph - h), (0, pw - w)]
        x = np.pad(x, pad)
    return hough_transform(x, q)


def fht_layer_backward(grad_out: np.ndarray, space: Quadrant | str, in_shape: tuple[int, int]) -> np.ndarray:
    """Exact adjoint of :func:`fht_layer_forward` for inputs of spatial shape ``in_shape``."""
    q = Quadrant(space)
    h, w = in_shape
    ph, pw = _padded_dims(q, h, w)
    g = hough_transform_adjoint(grad_out, q, ph, pw)
    return g[..., :h, :w]


def _padded_dims(q: Quadrant, h: int, w: int) -> tuple[int, int]:
    if q.mostly_vertical:
        return next_power_of_two(h), w
    return h, next_power_of_two(w)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def one_minus_rbf(x: np.ndarray) -> np.ndarray:
    """``1 - exp(-x**2)``, bounded in ``[0, 1)``."""
    return -np.expm1(-np.square(x))


def one_minus_rbf_grad(x: np.ndarray) -> np.ndarray:
    return 2.0 * x * np.exp(-np.square(x))


def l2_loss(pred: np.ndarray, target: np.ndarray, normalize: bool = True) -> tuple[float, np.ndarray]:
    """Sum (or mean, with ``normalize``) of squared differences and its gradient."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} differ")
    diff = pred - target
    scale = 1.0 / diff.size if normalize else 1.0
    return float(np.sum(diff * diff) * scale), 2.0 * scale * diff


# -- architecture -------------------------------------------------------------


def _table_layers(branch: Branch, filters: int, late_filters: int) -> list[LayerSpec]:
    first = "H12" if branch == "vertical" else "H34"
    f, g = filters, late_filters
    return [
        LayerSpec("conv", f, (5, 5), (1, 1), "relu"),
        LayerSpec("conv", f, (5, 5), (2, 2), "relu"),
        LayerSpec("conv", f, (5, 5), (1, 1), "relu"),
        LayerSpec("fht", space=first),
        LayerSpec("conv", f, (3, 9), (1, 1), "relu"),
        LayerSpec("conv", f, (3, 5), (1, 1), "relu"),
        LayerSpec("conv", f, (3, 9), (1, 1), "relu"),
        LayerSpec("conv", f, (3, 5), (1, 1), "relu"),
        LayerSpec("fht", space="H34"),
        LayerSpec("conv", g, (5, 5), (3, 3), "relu"),
        LayerSpec("conv", g, (5, 5), (3, 3), "relu"),
        LayerSpec("conv", 1, (5, 5), (1, 1), "one_minus_rbf"),
    ]


def _toy_layers(branch: Branch, filters: int) -> list[LayerSpec]:
    # same layer kinds and order, kernels and strides sized for 32-64 px inputs
    first = "H12" if branch == "vertical" else "H34"
    f = filters
    return [
        LayerSpec("conv", f, (3, 3), (1, 1), "relu"),
        LayerSpec("conv", f, (3, 3), (2, 2), "relu"),
        LayerSpec("conv", f, (3, 3), (1, 1), "relu"),
        LayerSpec("fht", space=first),
        LayerSpec("conv", f, (3, 3), (1, 1), "relu"),
        LayerSpec("conv", f, (3, 3), (1, 1), "relu"),
        LayerSpec("conv", f, (3, 3), (1, 1), "relu"),
        LayerSpec("conv", f, (3, 3), (1, 1), "relu"),
        LayerSpec("fht", space="H34"),
        LayerSpec("conv", f, (3, 3), (2, 2), "relu"),
        LayerSpec("conv", f, (3, 3), (2, 2), "relu"),
        LayerSpec("conv", 1, (3, 3), (1, 1), "one_minus_rbf"),
    ]


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, int, int, int]) -> np.ndarray:
    f, c, kh, kw = shape
    limit = np.sqrt(6.0 / (c * kh * kw + f * kh * kw))
    return rng.uniform(-limit, limit, size=shape)


def param_count(net: "HoughNet | NetworkSpec") -> int:
    spec = net.spec if isinstance(net, HoughNet) else net
    total = 0
    channels = spec.in_channels
    for layer in spec.layers:
        if layer.kind == "conv":
            total += layer.filters * channels * layer.kernel[0] * layer.kernel[1]
            channels = layer.filters
    return total


@dataclass(frozen=True)
class NetGeometry:
    """Index geometry of a network applied to an ``in_h x in_w`` input.

    ``pre``, ``mid`` and ``post`` are the convolution chains before the first
    FHT, between the two FHTs and after the second one.  ``fht1_in`` and
    ``fht2_in`` are the unpadded ``(h, w)`` inputs of the FHT layers and
    ``fht1_pad``/``fht2_pad`` the padded ones.
    """

    branch: Branch
    in_shape: tuple[int, int]
    pre: CoordChain
    mid: CoordChain
    post: CoordChain
    fht1_in: tuple[int, int]
    fht1_pad: tuple[int, int]
    fht1_out: tuple[int, int]
    fht2_in: tuple[int, int]
    fht2_pad: tuple[int, int]
    fht2_out: tuple[int, int]
    out_shape: tuple[int, int]


@dataclass
class HoughNet:
    spec: NetworkSpec
    weights: list[np.ndarray]
    input_gain: float = 1.0
    seed: int | None = None

    @property
    def branch(self) -> Branch:
        return self.spec.branch

    def conv_layers(self) -> list[int]:
        return [i for i, layer in enumerate(self.spec.layers) if layer.kind == "conv"]

    # -- shapes and geometry --

    def shape_trace(self, h: int, w: int) -> list[tuple[int, int, int]]:
        """``(C, H, W)`` after every layer, starting with the input."""
        c = self.spec.in_channels
        trace = [(c, h, w)]
        for layer in self.spec.layers:
            if layer.kind == "conv":
                kh, kw = layer.kernel
                sh, sw = layer.stride
                if h < kh or w < kw:
                    raise DimensionError(f"feature map {(h, w)} smaller than kernel {(kh, kw)}")
                c, h, w = layer.filters, _conv_out(h, kh, sh), _conv_out(w, kw, sw)
            elif layer.kind == "fht":
                q = Quadrant(layer.space)
                h, w = hough_shape(q, *_padded_dims(q, h, w))
            trace.append((c, h, w))
        return trace

    def geometry(self, h: int, w: int) -> NetGeometry:
        trace = self.shape_trace(h, w)
        fht_idx = [i for i, layer in enumerate(self.spec.layers) if layer.kind == "fht"]
        if len(fht_idx) != 2:
            raise DimensionError("geometry needs exactly two FHT layers")
        a, b = fht_idx
        layers = self.spec.layers

        def chain(lo, hi):
            return CoordChain(tuple(l.geometry() for l in layers[lo:hi] if l.kind == "conv"))

        def dims(i):
            return trace[i][1], trace[i][2]

        q1, q2 = Quadrant(layers[a].space), Quadrant(layers[b].space)
        return NetGeometry(
            branch=self.branch,
            in_shape=(h, w),
            pre=chain(0, a),
            mid=chain(a + 1, b),
            post=chain(b + 1, len(layers)),
            fht1_in=dims(a),
            fht1_pad=_padded_dims(q1, *dims(a)),
            fht1_out=dims(a + 1),
            fht2_in=dims(b),
            fht2_pad=_padded_dims(q2, *dims(b)),
            fht2_out=dims(b + 1),
            out_shape=dims(len(layers)),
        )

    # -- passes --

    def forward(self, x: np.ndarray, keep: bool = False):
        """Run the network on ``(N, C, H, W)`` (or ``(C, H, W)``) input.

        With ``keep`` returns ``(output, cache)`` for :meth:`backward`.
        """
        x4, squeeze = _as4d(x)
        a = x4 * self.input_gain
        cache = []
        wi = 0
        for layer in self.spec.layers:
            if layer.kind == "conv":
                w = self.weights[wi]
                wi += 1
                z = conv_forward(a, w, layer.stride)
                if layer.activation == "relu":
                    out = relu(z)
                elif layer.activation == "one_minus_rbf":
                    out = one_minus_rbf(z)
                else:
                    out = z
                cache.append((a, z))
            elif layer.kind == "fht":
                cache.append((a.shape[-2:], None))
                out = fht_layer_forward(a, layer.space)
            elif layer.kind == "relu":
                cache.append((a, None))
                out = relu(a)
            elif layer.kind == "one_minus_rbf":
                cache.append((a, None))
                out = one_minus_rbf(a)
            else:
                raise ValueError(f"unknown layer kind {layer.kind!r}")
            a = out
        if not np.all(np.isfinite(a)):
            raise TrainingDivergenceError("non-finite network output")
        out = a[0] if squeeze else a
        return (out, cache) if keep else out

    def backward(self, grad_out: np.ndarray, cache) -> list[np.ndarray]:
        """Weight gradients for the cached forward pass."""
        g, _ = _as4d(grad_out)
        grads: list[np.ndarray] = [None] * len(self.weights)  # type: ignore[list-item]
        wi = len(self.weights)
        for layer, (saved, z) in zip(reversed(self.spec.layers), reversed(cache)):
            if layer.kind == "conv":
                wi -= 1
                if layer.activation == "relu":
                    g = g * (z > 0)
                elif layer.activation == "one_minus_rbf":
                    g = g * one_minus_rbf_grad(z)
                g, grads[wi] = conv_backward(g, saved, self.weights[wi], layer.stride)
            elif layer.kind == "fht":
                g = fht_layer_backward(g, layer.space, tuple(saved))
            elif layer.kind == "relu":
                g = g * (saved > 0)
            elif layer.kind == "one_minus_rbf":
                g = g * one_minus_rbf_grad(saved)
        for gw in grads:
            if not np.all(np.isfinite(gw)):
                raise TrainingDivergenceError("non-finite weight gradient")
        return grads

    def pre_activation(self, x: np.ndarray) -> np.ndarray:
        """Output of the last convolution before its activation."""
        _, cache = self.forward(x, keep=True)
        return cache[-1][1]

    def copy(self) -> "HoughNet":
        return HoughNet(self.spec, [w.copy() for w in self.weights], self.input_gain, self.seed)


def build_houghnet(
    branch: Branch,
    *,
    filters: int | None = None,
    preset: Literal["paper", "toy"] = "paper",
    seed: int = 0,
) -> HoughNet:
    """Two-FHT network of one branch with Glorot-uniform weights.

    ``preset="paper"`` reproduces the published layer table (12 filters,
    31196 parameters); ``preset="toy"`` keeps the layer kinds and order with
    3x3 kernels for small inputs.
    """
    if branch not in ("vertical", "horizontal"):
        raise ValueError(f"unknown branch {branch!r}")
    if preset == "paper":
        if filters is None:
            layers = _table_layers(branch, 12, 16)
        else:
            layers = _table_layers(branch, filters, filters)
    elif preset == "toy":
        layers = _toy_layers(branch, 4 if filters is None else filters)
    else:
        raise ValueError(f"unknown preset {preset!r}")
    spec = NetworkSpec(branch, tuple(layers))
    rng = np.random.default_rng(seed)
    weights = []
    channels = spec.in_channels
    for layer in spec.layers:
        if layer.kind == "conv":
            weights.append(glorot_uniform(rng, (layer.filters, channels, *layer.kernel)))
            channels = layer.filters
    return HoughNet(spec, weights, 1.0, seed)


# -- optimisation ---------------------------------------------------------------


@dataclass
class SGD:
    lr: float = 1e-3
    momentum: float = 0.9
    velocity: list[np.ndarray] = field(default_factory=list)

    def step(self, weights: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        if not self.velocity:
            self.velocity = [np.zeros_like(w) for w in weights]
        return sgd_step(weights, grads, self.lr, self.momentum, self.velocity)


def sgd_step(
    weights: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    lr: float,
    momentum: float = 0.0,
    velocity: list[np.ndarray] | None = None,
) -> list[np.ndarray]:
    """Momentum SGD: ``v <- momentum * v + g``; ``w <- w - lr * v``.

    ``velocity`` is updated in place when given.
    """
    if lr < 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    if not 0 <= momentum < 1:
        raise ValueError(f"momentum must lie in [0, 1), got {momentum}")
    bad = [i for i, g in enumerate(grads) if not np.all(np.isfinite(g))]
    if bad:
        norms = [float(np.nanmax(np.abs(grads[i]))) if np.any(np.isfinite(grads[i])) else float("nan") for i in bad]
        raise TrainingDivergenceError(f"non-finite gradients in tensors {bad} (finite max |g|: {norms})")
    if velocity is None:
        velocity = [np.zeros_like(w) for w in weights]
    out = []
    for i, (w, g) in enumerate(zip(weights, grads)):
        velocity[i] = momentum * velocity[i] + g
        out.append(w - lr * velocity[i])
    return out


# -- checkpoints ------------------------------------------------------------------


def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "dtype": "<f8", "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype=d.get("dtype", "<f8")).reshape(d["shape"]).astype(np.float64)


def checkpoint_dict(net: HoughNet, **extra) -> dict:
    doc = {
        "format": "houghvp-checkpoint",
        "version": CHECKPOINT_VERSION,
        "network": net.spec.to_dict(),
        "input_gain": net.input_gain,
        "seed": net.seed,
        "weights": [_encode(w) for w in net.weights],
    }
    if "velocity" in extra and extra["velocity"] is not None:
        extra = dict(extra, velocity=[_encode(v) for v in extra["velocity"]])
    doc.update(extra)
    return doc


def save_checkpoint(path, net: HoughNet, **extra) -> None:
    """Write ``net`` (plus JSON-serializable ``extra`` fields) as a JSON checkpoint."""
    from .io import atomic_write_text

    atomic_write_text(path, json.dumps(checkpoint_dict(net, **extra), indent=1, sort_keys=True))


def load_checkpoint(path) -> tuple[HoughNet, dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "houghvp-checkpoint":
        raise ValueError(f"{path} is not a houghvp checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    spec = NetworkSpec.from_dict(doc["network"])
    net = HoughNet(spec, [_decode(w) for w in doc["weights"]], float(doc["input_gain"]), doc.get("seed"))
    if doc.get("velocity") is not None:
        doc["velocity"] = [_decode(v) for v in doc["velocity"]]
    return net, doc
