"""Toy-scale training of one HoughNet branch on images with known vanishing points."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import TrainingDivergenceError, UnrepresentableTargetError
from .nn import HoughNet, l2_loss, sgd_step
from .pipeline import make_target

log = logging.getLogger(__name__)

__all__ = ["TrainConfig", "TrainState", "prepare_samples", "calibrate_gain", "dataset_loss", "train_branch", "epoch_order", "multi_start"]


@dataclass
class TrainConfig:
    lr: float = 1e-3
    momentum: float = 0.9
    epochs: int = 50
    batch: int = 8
    seed: int = 0
    target_size: int = 5
    calibrate: bool = True


@dataclass
class TrainState:
    """Everything needed to resume: weights live in the network, the rest here."""

    epoch: int = 0
    velocity: list[np.ndarray] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)


def prepare_samples(
    images: Sequence[np.ndarray], vps: Sequence[np.ndarray], net: HoughNet, size: int = 5
) -> tuple[np.ndarray, np.ndarray, list[int], int]:
    """Stack images and their target maps; samples whose target leaves the grid are dropped.

    Returns ``(x, y, kept_indices, excluded)``.
    """
    xs, ys, kept = [], [], []
    excluded = 0
    for i, (img, vp) in enumerate(zip(images, vps)):
        h, w = img.shape
        try:
            t = make_target(vp, net.branch, net, h, w, size)
        except UnrepresentableTargetError as exc:
            log.debug("sample %d excluded: %s", i, exc)
            excluded += 1
            continue
        xs.append(img[None])
        ys.append(t.heatmap[None])
        kept.append(i)
    if not xs:
        raise UnrepresentableTargetError(f"all {excluded} samples have out-of-grid {net.branch} targets")
    return np.stack(xs), np.stack(ys), kept, excluded


def calibrate_gain(net: HoughNet, x: np.ndarray, target_std: float = 1.0) -> float:
    """Input scale giving the last pre-activation a standard deviation of ``target_std``.

    The network is positively homogeneous of degree one up to its final
    activation, so scaling the input scales that pre-activation exactly.
    """
    probe = net.copy()
    probe.input_gain = 1.0
    z = probe.pre_activation(x)
    std = float(np.std(z))
    if not np.isfinite(std) or std == 0:
        raise TrainingDivergenceError("cannot calibrate: last pre-activation is constant")
    net.input_gain = target_std / std
    return net.input_gain


def dataset_loss(net: HoughNet, x: np.ndarray, y: np.ndarray, batch: int = 32) -> float:
    total = 0.0
    for i in range(0, len(x), batch):
        pred = net.forward(x[i : i + batch])
        loss, _ = l2_loss(pred, y[i : i + batch])
        total += loss * len(pred)
    return total / len(x)


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    """Sample order of one epoch; depends only on ``(seed, epoch)`` so runs can resume."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def train_branch(
    net: HoughNet,
    x: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    state: TrainState | None = None,
    on_epoch: Callable[[HoughNet, TrainState], None] | None = None,
) -> TrainState:
    """Minibatch momentum SGD on the per-cell L2 loss, from ``state.epoch`` to ``cfg.epochs``.

    ``history`` gets one record per epoch with the mean minibatch loss and
    the full-dataset loss after the epoch; epoch ``0`` holds the initial loss.
    """
    state = state or TrainState()
    if not state.velocity:
        state.velocity = [np.zeros_like(w) for w in net.weights]
    if not state.history:
        state.history.append({"epoch": 0, "batch_loss": None, "loss": dataset_loss(net, x, y)})
    n = len(x)
    for epoch in range(state.epoch + 1, cfg.epochs + 1):
        order = epoch_order(cfg.seed, epoch, n)
        batch_losses = []
        for start in range(0, n, cfg.batch):
            idx = order[start : start + cfg.batch]
            pred, cache = net.forward(x[idx], keep=True)
            loss, grad = l2_loss(pred, y[idx])
            if not np.isfinite(loss):
                raise TrainingDivergenceError(f"non-finite loss at epoch {epoch}")
            grads = net.backward(grad, cache)
            net.weights = sgd_step(net.weights, grads, cfg.lr, cfg.momentum, state.velocity)
            batch_losses.append(loss)
        state.epoch = epoch
        state.history.append({"epoch": epoch, "batch_loss": float(np.mean(batch_losses)), "loss": dataset_loss(net, x, y)})
        log.info("%s epoch %d loss %.6g", net.branch, epoch, state.history[-1]["loss"])
        if on_epoch is not None:
            on_epoch(net, state)
    return state


def multi_start(
    candidates: Sequence[HoughNet], x: np.ndarray, y: np.ndarray, cfg: TrainConfig, warmup: int = 2
) -> tuple[HoughNet, TrainState, HoughNet, list[float]]:
    """Warm up every candidate for ``warmup`` epochs and keep the one with the lowest training loss.

    Small bias-free stacks ending in ``1 - exp(-z^2)`` often shrink every
    output towards zero early on, where the gradient vanishes; a short
    warm-up separates those starts from the ones that keep a localized
    response. Returns ``(net, state, untrained_copy, warmup_losses)``.
    """
    if not candidates:
        raise ValueError("need at least one candidate network")
    short = replace(cfg, epochs=min(warmup, cfg.epochs))
    best = None
    losses = []
    for net in candidates:
        if cfg.calibrate:
            calibrate_gain(net, x)
        untrained = net.copy()
        state = train_branch(net, x, y, short)
        losses.append(state.history[-1]["loss"])
        log.info("%s start seed %d warm-up loss %.6g", net.branch, net.seed, losses[-1])
        if best is None or losses[-1] < best[1].history[-1]["loss"]:
            best = (net, state, untrained)
    return (*best, losses)


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
