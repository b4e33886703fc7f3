"""``houghvp`` command line: fht, detect-vp, rectify, synth, train, eval.

Exit codes: 0 success, 2 input error, 3 numeric or degeneracy error.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .errors import InvalidMapError, UnrepresentableTargetError
from .fht import Quadrant, hough_transform, pad_integration_axis
from .io import atomic_write_text, normalized_preview, read_gray, resize_to_width, write_gray, write_raw_map
from .nn import build_houghnet, load_checkpoint, save_checkpoint
from .pipeline import BRANCHES, VanishingPair, classical_detect, network_detect, vp_angle_error
from .rectify import Quad, evaluate_quads, homography_from_vps, transform_quad, warp
from .synth import gen_document
from .training import TrainConfig, TrainState, calibrate_gain, multi_start, prepare_samples, train_branch

log = logging.getLogger("houghvp")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
VPS_SCHEMA = {"schema": "houghvp-vps", "version": 1}
METRICS_SCHEMA = {"schema": "houghvp-metrics", "version": 1}
MANIFEST_SCHEMA = {"schema": "houghvp-manifest", "version": 1}
SAMPLE_SCHEMA = "houghvp-sample"


@dataclass
class RunConfig:
    """Every knob of every command; serialized into each artifact."""

    scale_width: int | None = None  # 400 for MIDV-style photos, 500 for binary pages
    fht_padding: str = "zero-pow2"
    lr: float = 1e-3
    momentum: float = 0.9
    epochs: int = 50
    batch: int = 8
    seed: int = 0
    preset: str = "toy"
    filters: int = 4
    target_size: int = 5
    checkpoint_every: int = 5
    restarts: int = 4
    warmup_epochs: int = 2
    edge_percentile: float = 90.0
    power: float = 2.0
    oriented_edges: bool = True
    synth_size: int = 64
    distortion: float = 1.0
    clutter: bool = False
    stroke_density: float = 0.8
    test_fraction: float = 0.2
    workers: int = 4

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        if cfg.fht_padding != "zero-pow2":
            raise ValueError(f"unsupported fht_padding {cfg.fht_padding!r}; only 'zero-pow2'")
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(args: argparse.Namespace) -> RunConfig:
    d = {}
    if getattr(args, "config", None):
        d = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(d, dict):
            raise ValueError("config file must hold a JSON object")
    if getattr(args, "seed", None) is not None:
        d["seed"] = args.seed
    return RunConfig.from_dict(d)


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True)


def _png_meta(cfg: RunConfig) -> dict:
    return {"houghvp_run_config": json.dumps(cfg.to_dict(), sort_keys=True)}


# -- dataset ingestion -----------------------------------------------------------------


@dataclass
class DatasetRecord:
    image: Path
    quad: Quad | None
    split: str
    vps: dict | None = None


def _corners_outside(q: Quad, w: int, h: int) -> int:
    c = q.corners
    return int(np.sum((c[:, 0] < 0) | (c[:, 0] > w - 1) | (c[:, 1] < 0) | (c[:, 1] > h - 1)))


def load_dataset(root) -> tuple[list[DatasetRecord], int]:
    """Read a manifest (or every sample sidecar) under ``root``.

    Records whose quad has more than one corner outside the image are
    dropped; the count is returned alongside the kept records.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory {root} does not exist")
    manifest = root / "manifest.json"
    if manifest.exists():
        doc = json.loads(manifest.read_text(encoding="utf-8"))
        sidecars = [root / r["sidecar"] for r in doc.get("records", [])]
    else:
        sidecars = sorted(p for p in root.glob("*.json") if p.name != "manifest.json")
    records, dropped = [], 0
    for path in sidecars:
        side = json.loads(path.read_text(encoding="utf-8"))
        if side.get("schema") != SAMPLE_SCHEMA:
            continue
        img_path = root / side["image"]
        quad = Quad.from_list(side["quad"]) if side.get("quad") is not None else None
        if quad is not None:
            w, h = side.get("width"), side.get("height")
            if w is None or h is None:
                h, w = read_gray(img_path).shape
            if _corners_outside(quad, w, h) > 1:
                dropped += 1
                continue
        records.append(DatasetRecord(img_path, quad, side.get("split", "test"), side.get("vps")))
    if dropped:
        log.info("ingestion dropped %d record(s) with more than one corner outside the image", dropped)
    return records, dropped


def _scale_matrix(w: int, width: int) -> np.ndarray:
    s = width / w
    return np.array([[s, 0.0, 0.5 * s - 0.5], [0.0, s, 0.5 * s - 0.5], [0.0, 0.0, 1.0]])


def load_record(rec: DatasetRecord, cfg: RunConfig):
    """Image, quad and ground-truth VPs of a record, rescaled to ``cfg.scale_width``."""
    img = read_gray(rec.image)
    quad = rec.quad
    vps = {k: np.asarray(v, dtype=float) for k, v in (rec.vps or {}).items()}
    if cfg.scale_width and img.shape[1] != cfg.scale_width:
        m = _scale_matrix(img.shape[1], cfg.scale_width)
        img = resize_to_width(img, cfg.scale_width)
        if quad is not None:
            c = np.c_[quad.corners, np.ones(4)] @ m.T
            quad = Quad(c[:, :2] / c[:, 2:])
        vps = {k: m @ v for k, v in vps.items()}
    return img, quad, vps


# -- commands ---------------------------------------------------------------------------


def cmd_fht(args, cfg: RunConfig) -> int:
    img = read_gray(args.input)
    q = Quadrant(args.quadrant)
    h, w = img.shape
    data = hough_transform(pad_integration_axis(img, q), q)
    stem = Path(args.out)
    header = {"quadrant": q.value, "src_w": w, "src_h": h, "run_config": cfg.to_dict()}
    write_raw_map(stem, data, header)
    write_gray(stem.with_suffix(".png"), normalized_preview(data), text=_png_meta(cfg))
    print(_dump({"raw": str(stem.with_suffix(".f32")), "dims": list(data.shape), "quadrant": q.value}))
    return EXIT_OK


def _load_networks(weights: str):
    d = Path(weights)
    nets = {}
    for b in BRANCHES:
        path = d / f"{b}.ckpt.json"
        if not path.exists():
            raise FileNotFoundError(f"missing {b} checkpoint {path}")
        nets[b], _ = load_checkpoint(path)
    return nets


def _detect(img: np.ndarray, cfg: RunConfig, method: str, nets) -> VanishingPair:
    if method == "classical":
        return classical_detect(img, edge_percentile=cfg.edge_percentile, power=cfg.power, oriented=cfg.oriented_edges)
    return network_detect(img, nets["vertical"], nets["horizontal"], cfg.target_size // 2)


def _vp_record(path, pair: VanishingPair) -> dict:
    return {
        "image": str(path),
        "width": pair.w,
        "height": pair.h,
        "horizontal_vp": [float(v) for v in pair.horizontal_vp],
        "vertical_vp": [float(v) for v in pair.vertical_vp],
        "flags": pair.flags(),
        "diagnostics": pair.diagnostics,
    }


def _overlay(img: np.ndarray, pair: VanishingPair, path) -> None:
    from PIL import Image, ImageDraw

    from .io import atomic_write_bytes

    h, w = img.shape
    rgb = Image.fromarray(np.clip(np.rint(img * 255), 0, 255).astype(np.uint8), mode="L").convert("RGB")
    draw = ImageDraw.Draw(rgb)
    for vp, colour in ((pair.horizontal_vp, (255, 64, 64)), (pair.vertical_vp, (64, 160, 255))):
        for t in np.linspace(0.1, 0.9, 7):
            start = np.array([t * (w - 1), t * (h - 1)])
            d = vp[:2] - start * vp[2]
            n = np.linalg.norm(d)
            if n == 0:
                continue
            d = d / n * 2 * max(w, h)
            draw.line([tuple(start - d), tuple(start + d)], fill=colour, width=1)
    buf = _io.BytesIO()
    rgb.save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def cmd_detect_vp(args, cfg: RunConfig) -> int:
    if args.method == "network" and not args.weights:
        raise ValueError("--method network needs --weights")
    nets = _load_networks(args.weights) if args.method == "network" else None

    def one(path):
        img = read_gray(path)
        if cfg.scale_width:
            img = resize_to_width(img, cfg.scale_width)
        return img, _detect(img, cfg, args.method, nets)

    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        results = list(pool.map(one, args.inputs))
    doc = dict(VPS_SCHEMA, method=args.method, run_config=cfg.to_dict())
    doc["results"] = [_vp_record(p, pair) for p, (_, pair) in zip(args.inputs, results)]
    text = _dump(doc)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        print(text)
    if args.overlay:
        if len(args.inputs) != 1:
            raise ValueError("--overlay needs exactly one input")
        _overlay(results[0][0], results[0][1], args.overlay)
    return EXIT_OK


def _parse_vp(text: str) -> np.ndarray:
    parts = [float(v) for v in text.replace(",", " ").split()]
    if len(parts) == 2:
        parts.append(1.0)
    if len(parts) != 3:
        raise ValueError(f"vanishing point needs 2 or 3 numbers, got {text!r}")
    return np.array(parts)


def cmd_rectify(args, cfg: RunConfig) -> int:
    img = read_gray(args.input)
    if cfg.scale_width:
        img = resize_to_width(img, cfg.scale_width)
    h, w = img.shape
    if args.auto:
        pair = classical_detect(img, edge_percentile=cfg.edge_percentile, power=cfg.power, oriented=cfg.oriented_edges)
        hvp, vvp = pair.horizontal_vp, pair.vertical_vp
    elif args.vps_json:
        doc = json.loads(Path(args.vps_json).read_text(encoding="utf-8"))
        rec = doc["results"][0] if "results" in doc else doc
        hvp, vvp = np.asarray(rec["horizontal_vp"], float), np.asarray(rec["vertical_vp"], float)
    elif args.hvp and args.vvp:
        hvp, vvp = _parse_vp(args.hvp), _parse_vp(args.vvp)
    else:
        raise ValueError("give --hvp and --vvp, --vps-json or --auto")
    m = homography_from_vps(hvp, vvp, w, h)
    if args.keep_frame:
        out = warp(img, m, shape=(h, w), origin=(0.0, 0.0))
        origin = [0.0, 0.0]
    else:
        out = warp(img, m)
        from .rectify import output_frame

        origin = output_frame(m, w, h)[0].tolist()
    write_gray(args.out, out, text=_png_meta(cfg))
    doc = {
        "homography": m.tolist(),
        "origin": origin,
        "horizontal_vp": hvp.tolist(),
        "vertical_vp": vvp.tolist(),
        "output": str(args.out),
        "run_config": cfg.to_dict(),
    }
    atomic_write_text(Path(args.out).with_suffix(".json"), _dump(doc))
    print(_dump({"homography": m.tolist(), "origin": origin}))
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    count = args.count
    n_test = int(round(count * cfg.test_fraction))
    first_test = count - n_test

    def one(i):
        seed = cfg.seed * 1_000_003 + i
        smp = gen_document(
            seed,
            cfg.synth_size,
            cfg.synth_size,
            cfg.distortion,
            clutter=cfg.clutter,
            stroke_density=cfg.stroke_density,
        )
        split = "test" if i >= first_test else "train"
        name = f"{i:06d}"
        write_gray(out / f"{name}.png", smp.image, text=_png_meta(cfg))
        side = smp.sidecar(f"{name}.png", split)
        side["run_config"] = cfg.to_dict()
        atomic_write_text(out / f"{name}.json", _dump(side))
        return {"image": f"{name}.png", "sidecar": f"{name}.json", "split": split}

    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        records = list(pool.map(one, range(count)))
    manifest = dict(MANIFEST_SCHEMA, count=count, records=records, run_config=cfg.to_dict())
    atomic_write_text(out / "manifest.json", _dump(manifest))
    print(_dump({"count": count, "train": first_test, "test": n_test, "out": str(out)}))
    return EXIT_OK


def _branch_data(records, cfg: RunConfig):
    imgs, vps = [], []
    for rec in records:
        img, _, v = load_record(rec, cfg)
        if "horizontal" not in v or "vertical" not in v:
            raise ValueError(f"{rec.image}: sidecar lacks ground-truth vanishing points")
        imgs.append(img)
        vps.append(v)
    return imgs, vps


def _mean_vp_error(imgs, vps, nets, radius: int) -> float:
    errs = []
    for img, v in zip(imgs, vps):
        h, w = img.shape
        pair = network_detect(img, nets["vertical"], nets["horizontal"], radius)
        errs.append(vp_angle_error(v["vertical"], pair.vertical_vp, w, h))
        errs.append(vp_angle_error(v["horizontal"], pair.horizontal_vp, w, h))
    return float(np.mean(errs)) if errs else float("nan")


def _start_seed(seed: int, branch_index: int, start: int) -> int:
    return int(np.random.SeedSequence([seed, branch_index, start]).generate_state(1)[0])


def cmd_train(args, cfg: RunConfig) -> int:
    records, dropped = load_dataset(args.dataset)
    train = [r for r in records if r.split == "train"]
    test = [r for r in records if r.split == "test"]
    if not train:
        raise ValueError(f"no training records under {args.dataset}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    imgs, vps = _branch_data(train, cfg)
    tcfg = TrainConfig(cfg.lr, cfg.momentum, cfg.epochs, cfg.batch, cfg.seed, cfg.target_size)
    nets, initial, summary = {}, {}, {"dropped_at_ingestion": dropped}
    rows = []
    for k, branch in enumerate(BRANCHES):
        last = out / f"{branch}.last.json"
        starts = [
            build_houghnet(branch, preset=cfg.preset, filters=cfg.filters, seed=_start_seed(cfg.seed, k, r))
            for r in range(max(1, cfg.restarts))
        ]
        x, y, kept, excluded = prepare_samples(imgs, [v[branch] for v in vps], starts[0], cfg.target_size)
        if args.resume and last.exists():
            net, doc = load_checkpoint(last)
            state = TrainState(doc["epoch"], doc["velocity"], doc["history"])
            untrained = build_houghnet(branch, preset=cfg.preset, filters=cfg.filters, seed=net.seed)
            calibrate_gain(untrained, x)
            warmup_losses = doc["warmup_losses"]
        else:
            net, state, untrained, warmup_losses = multi_start(starts, x, y, tcfg, cfg.warmup_epochs)
        initial[branch] = untrained

        def save_last(n, st, last=last, warmup_losses=warmup_losses):
            save_checkpoint(
                last,
                n,
                epoch=st.epoch,
                velocity=st.velocity,
                history=st.history,
                warmup_losses=warmup_losses,
                run_config=cfg.to_dict(),
            )

        def on_epoch(n, st):
            if st.epoch % max(1, cfg.checkpoint_every) == 0:
                save_last(n, st)

        try:
            state = train_branch(net, x, y, tcfg, state, on_epoch)
        except ArithmeticError:
            log.error("%s training diverged; last good checkpoint kept at %s", branch, last)
            raise
        save_last(net, state)
        save_checkpoint(out / f"{branch}.ckpt.json", net, epoch=state.epoch, history=state.history, run_config=cfg.to_dict())
        nets[branch] = net
        rows += [(branch, r["epoch"], r["batch_loss"], r["loss"]) for r in state.history]
        summary[branch] = {
            "samples": len(kept),
            "excluded_targets": excluded,
            "initial_loss": state.history[0]["loss"],
            "final_loss": state.history[-1]["loss"],
            "input_gain": net.input_gain,
            "start_seed": net.seed,
            "warmup_losses": warmup_losses,
        }
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["branch", "epoch", "batch_loss", "loss"])
    for r in rows:
        writer.writerow([r[0], r[1], "" if r[2] is None else repr(r[2]), repr(r[3])])
    atomic_write_text(out / "loss.csv", buf.getvalue())
    if test:
        t_imgs, t_vps = _branch_data(test, cfg)
        summary["heldout"] = {
            "n": len(test),
            "untrained_mean_vp_error_deg": _mean_vp_error(t_imgs, t_vps, initial, cfg.target_size // 2),
            "trained_mean_vp_error_deg": _mean_vp_error(t_imgs, t_vps, nets, cfg.target_size // 2),
        }
    report = {"schema": "houghvp-train-report", "version": 1, "summary": summary, "run_config": cfg.to_dict()}
    atomic_write_text(out / "report.json", _dump(report))
    print(_dump(summary))
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    records, dropped = load_dataset(args.dataset)
    records = [r for r in records if r.quad is not None and (args.split == "all" or r.split == args.split)]
    if not records:
        raise ValueError("no records with ground-truth quads to evaluate")
    if args.vps == "network" and not args.weights:
        raise ValueError("--vps network needs --weights")
    nets = _load_networks(args.weights) if args.vps == "network" else None

    def one(rec):
        img, quad, vps = load_record(rec, cfg)
        h, w = img.shape
        if args.vps == "gt":
            hvp, vvp = vps["horizontal"], vps["vertical"]
        else:
            pair = _detect(img, cfg, args.vps, nets)
            hvp, vvp = pair.horizontal_vp, pair.vertical_vp
        m = homography_from_vps(hvp, vvp, w, h)
        return quad, transform_quad(quad, m)

    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        pairs = list(pool.map(one, records))
    original = evaluate_quads([p[0] for p in pairs])
    corrected = evaluate_quads([p[1] for p in pairs])
    doc = dict(
        METRICS_SCHEMA,
        vps_source=args.vps,
        split=args.split,
        n=len(records),
        dropped_at_ingestion=dropped,
        original={"d1": original.d1, "d2": original.d2, "excluded": original.excluded},
        corrected={"d1": corrected.d1, "d2": corrected.d2, "excluded": corrected.excluded},
        images=[str(r.image) for r in records],
        run_config=cfg.to_dict(),
    )
    text = _dump(doc)
    if args.out:
        atomic_write_text(args.out, text)
    print(text)
    return EXIT_OK


# -- entry point -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="houghvp", description="Fast Hough transform vanishing points for documents.")
    p.add_argument("--version", action="version", version=f"houghvp {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("fht", parents=[common], help="Hough map of an image (raw float32 + preview)")
    s.add_argument("input")
    s.add_argument("--quadrant", default="H12", choices=[q.value for q in Quadrant])
    s.add_argument("--out", required=True, help="output stem; writes .f32, .json and .png")
    s.set_defaults(func=cmd_fht)

    s = sub.add_parser("detect-vp", parents=[common], help="detect both vanishing points")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--method", choices=["classical", "network"], default="classical")
    s.add_argument("--weights", help="directory with vertical.ckpt.json and horizontal.ckpt.json")
    s.add_argument("--out", help="JSON output (stdout if omitted)")
    s.add_argument("--overlay", help="PNG with the two pencils drawn over the input")
    s.set_defaults(func=cmd_detect_vp)

    s = sub.add_parser("rectify", parents=[common], help="warp an image so its vanishing points go to infinity")
    s.add_argument("input")
    s.add_argument("--hvp", help="horizontal VP 'x,y' or 'x,y,w'")
    s.add_argument("--vvp", help="vertical VP 'x,y' or 'x,y,w'")
    s.add_argument("--vps-json", help="detect-vp output to take the VPs from")
    s.add_argument("--auto", action="store_true", help="detect VPs with the classical detector")
    s.add_argument("--keep-frame", action="store_true", help="keep the input frame instead of the warped bounding box")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_rectify)

    s = sub.add_parser("synth", parents=[common], help="generate synthetic document samples")
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", parents=[common], help="train both network branches")
    s.add_argument("dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--resume", action="store_true", help="continue from <out>/<branch>.last.json")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="d1/d2 before and after rectification")
    s.add_argument("dataset")
    s.add_argument("--vps", default="gt", choices=["gt", "classical", "network"])
    s.add_argument("--weights")
    s.add_argument("--split", default="all", choices=["all", "train", "test"])
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth" and args.count < 0:
            raise ValueError("--count must be non-negative")
        cfg = load_config(args)
        return args.func(args, cfg)
    except (ArithmeticError, InvalidMapError) as exc:
        print(f"houghvp: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError, UnrepresentableTargetError) as exc:
        print(f"houghvp: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
