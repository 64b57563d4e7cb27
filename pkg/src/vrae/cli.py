"""Command-line entry point: ``vrae <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import entropy as ent
from .analysis import pareto as par
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint
from .data import (
    DatasetManifest,
    DegradationConfig,
    degrade,
    list_images,
    load_image,
    save_png,
    split_and_augment,
)
from .metrics import evaluate, measure_fps, read_report_csv, write_report_csv
from .model import VraeConfig, build_network
from .nn.threads import get_threads, set_threads
from .train import ManifestSource, TrainConfig, loss_log_csv, make_batch, train

log = logging.getLogger("vrae")

MANIFEST = "manifest.csv"
NOISE_MODES = {"literal": "literal", "zero-mean": "zero_mean", "off": "off"}


def _write_run_json(run_dir: Path, command: str, settings: dict) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, "settings": settings, "threads": get_threads(), "version": __version__}
    (run_dir / "run.json").write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")


def _settings(args: argparse.Namespace) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}


def _manifest(data_dir: Path) -> DatasetManifest:
    path = data_dir / MANIFEST
    if not path.is_file():
        raise FileNotFoundError(f"no {MANIFEST} in {data_dir} (run `vrae prepare` first)")
    return DatasetManifest.load(path)


def _degradation_from(ckpt: Checkpoint) -> DegradationConfig:
    d = ckpt.extra.get("degradation")
    return DegradationConfig.from_dict(d) if d else DegradationConfig(seed=ckpt.seed)


# --------------------------------------------------------------------------
# subcommands


def cmd_prepare(args) -> int:
    paths = list_images(args.input)
    if not paths:
        raise ValueError(f"no PNG/JPEG images in {args.input}")
    out = args.out
    (out / "images").mkdir(parents=True, exist_ok=True)
    kept = []
    for p in paths:
        try:
            img = load_image(p, args.size)
        except OSError as exc:
            log.warning("skipping undecodable image %s: %s", p, exc)
            continue
        rel = f"images/{p.name}.png" if p.suffix.lower() != ".png" else f"images/{p.name}"
        save_png(img, out / rel)
        kept.append(rel)
    if not kept:
        raise ValueError(f"no decodable images in {args.input}")
    manifest = split_and_augment(kept, args.seed, args.augment_to)
    manifest.save(out / MANIFEST)
    counts = {s: len(manifest.split(s)) for s in ("train", "val", "test")}
    print(f"prepared {len(kept)} images -> {out / MANIFEST} {counts}")
    _write_run_json(args.run_dir or out, "prepare", _settings(args) | {"split_counts": counts})
    return 0


def cmd_degrade(args) -> int:
    src = args.in_dir
    folder = src / "images" if (src / MANIFEST).is_file() else src
    paths = list_images(folder)
    if not paths:
        raise ValueError(f"no PNG/JPEG images in {folder}")
    cfg = DegradationConfig(noise_mode=NOISE_MODES[args.noise], pool_iters=args.pool_iters, seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    for p in paths:
        with_prefix = f"images/{p.name}" if folder != src else p.name
        img = load_image(p, args.size) if args.size else _load_native(p)
        save_png(degrade(img, cfg, key=with_prefix), args.out / (p.stem + ".png"))
    print(f"degraded {len(paths)} images -> {args.out}")
    _write_run_json(args.run_dir or args.out, "degrade", _settings(args))
    return 0


def _load_native(path: Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)[None].copy()


def cmd_train(args) -> int:
    manifest = _manifest(args.data)
    base = VraeConfig(depth=args.depth, arch=args.arch, input_hw=(args.size, args.size))
    if args.width_scale != 1.0:
        base = VraeConfig.reduced(args.depth, args.arch, args.size, args.width_scale)
    degradation = DegradationConfig(noise_mode=NOISE_MODES[args.noise], pool_iters=args.pool_iters, seed=args.seed)
    cfg = TrainConfig(model=base, epochs=args.epochs, batch_size=args.batch, lr=args.lr, seed=args.seed,
                      eval_every=args.eval_every, checkpoint_path=args.out)
    train_set = ManifestSource(manifest.split("train"), args.data, args.size)
    val_set = ManifestSource(manifest.split("val"), args.data, args.size)
    if len(train_set) == 0:
        raise ValueError("manifest has an empty train split")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    result = train(cfg, train_set, degradation, val_set if len(val_set) else None)
    log_path = args.log or args.out.with_suffix(".loss.csv")
    Path(log_path).write_text(loss_log_csv(result.epochs), encoding="utf-8")
    last = result.epochs[-1]
    print(f"{base.label}: {len(result.step_losses)} steps, final train_mse={last.train_mse:.6f} -> {args.out}")
    _write_run_json(args.run_dir or args.out.parent, "train", _settings(args) | {"model": base.to_dict()})
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    net = ckpt.to_network()
    manifest = _manifest(args.data)
    source = ManifestSource(manifest.split(args.split), args.data, net.config.input_hw[0])
    if len(source) == 0:
        raise ValueError(f"split {args.split!r} is empty")
    fps_iters = None if (args.no_timestamp or args.fps_iters == 0) else args.fps_iters
    report = evaluate(net, source, _degradation_from(ckpt), args.label or net.config.label,
                      fps_iters=fps_iters, fps_warmup=min(10, args.fps_iters))
    reports = read_report_csv(args.report) if args.append and args.report.is_file() else []
    reports = [r for r in reports if r.model != report.model] + [report]
    args.report.parent.mkdir(parents=True, exist_ok=True)
    write_report_csv(reports, args.report)
    print(f"{report.model}: psnr={report.psnr_db:.3f} dB nmse={report.nmse:.5f} ssim={report.ssim:.4f} "
          f"fps={report.fps:.1f} params={report.params}")
    _write_run_json(args.run_dir or args.report.parent, "eval", _settings(args))
    return 0


def cmd_bench(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    net = ckpt.to_network()
    res = measure_fps(net, warmup=args.warmup, iters=args.iters)
    print(f"{net.config.label}: fps={res.fps:.2f} median_latency={res.median_latency_s * 1e3:.2f} ms "
          f"threads={res.threads} hardware={res.hardware}")
    _write_run_json(args.run_dir or Path.cwd(), "bench",
                    _settings(args) | {"fps": res.fps, "hardware": res.hardware})
    return 0


def cmd_entropy(args) -> int:
    ckpt_a, ckpt_b = load_checkpoint(args.ckpt_a), load_checkpoint(args.ckpt_b)
    net_a, net_b = ckpt_a.to_network(), ckpt_b.to_network()
    if net_a.config.input_hw != net_b.config.input_hw:
        raise ValueError("checkpoints were trained at different input sizes")
    records = _manifest(args.data).split(args.split)
    if not records:
        raise ValueError(f"split {args.split!r} is empty")
    rng = np.random.default_rng(args.seed)
    pick = sorted(rng.choice(len(records), size=min(args.probe, len(records)), replace=False).tolist())
    source = ManifestSource([records[i] for i in pick], args.data, net_a.config.input_hw[0])
    x, _ = make_batch(source, range(len(source)), _degradation_from(ckpt_a))
    labels = [args.label_a or net_a.config.label, args.label_b or net_b.config.label]
    if labels[0] == labels[1]:
        labels = [labels[0] + "-a", labels[1] + "-b"]
    profiles = [ent.entropy_profile(net_a, x, labels[0]), ent.entropy_profile(net_b, x, labels[1])]
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(ent.entropy_csv(profiles), encoding="utf-8")
    if args.svg:
        from .analysis.plots import entropy_svg

        args.out.with_suffix(".svg").write_text(entropy_svg(profiles, not args.no_timestamp), encoding="utf-8")
    for prof in profiles:
        print(prof.model, " ".join(f"{v:+.3f}" for v in prof.avg_delta_h))
    first = {p.model: p.avg_delta_h[0] for p in profiles}
    _write_run_json(args.run_dir or args.out.parent, "entropy", _settings(args) | {
        "probe_images": [r.path for r in source.records],
        "entropy_bins": ent.DEFAULT_BINS,
        "entropy_log_base": "e",
        "first_block_avg_delta_h": first,
    })
    return 0


def cmd_pareto(args) -> int:
    if not args.metrics.is_file():
        raise FileNotFoundError(f"metrics file not found: {args.metrics}")
    points = par.points_from_reports(read_report_csv(args.metrics), args.y)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(par.pareto_csv(points, args.y), encoding="utf-8")
    if args.svg:
        from .analysis.plots import pareto_svg

        label = {"psnr": "PSNR (dB)", "ssim": "SSIM", "nmse": "NMSE"}[args.y]
        args.out.with_suffix(".svg").write_text(pareto_svg(points, label, not args.no_timestamp), encoding="utf-8")
    print("front:", ", ".join(p.model for p in par.pareto_front(points)))
    _write_run_json(args.run_dir or args.out.parent, "pareto", _settings(args))
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vrae", description="Vertical residual autoencoder toolkit")
    parser.add_argument("--version", action="version", version=f"vrae {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--threads", type=int, default=None, help="BLAS threads (default: $VRAE_THREADS or all cores)")
        p.add_argument("--run-dir", type=Path, default=None, help="where run.json goes")

    p = sub.add_parser("prepare", help="resize an image folder and write a split manifest")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--augment-to", type=int, default=None)
    p.add_argument("--size", type=int, default=256)
    common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("degrade", help="write degraded copies of a folder")
    p.add_argument("--in", dest="in_dir", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--noise", choices=sorted(NOISE_MODES), default="literal")
    p.add_argument("--pool-iters", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=None, help="resize first (default: keep native size)")
    common(p)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", help="train VRAE-k or AE-k with MSE + Adam")
    p.add_argument("--arch", choices=["vrae", "ae"], default="vrae")
    p.add_argument("--depth", type=int, choices=[2, 3, 4, 5], default=3)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--width-scale", type=float, default=1.0)
    p.add_argument("--noise", choices=sorted(NOISE_MODES), default="literal")
    p.add_argument("--pool-iters", type=int, default=10)
    p.add_argument("--eval-every", type=int, default=1)
    p.add_argument("--log", type=Path, default=None, help="loss log CSV (default: <out>.loss.csv)")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="PSNR/NMSE/SSIM/FPS report for a checkpoint")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--label", default=None)
    p.add_argument("--fps-iters", type=int, default=100)
    p.add_argument("--append", action="store_true", help="merge into an existing report")
    p.add_argument("--no-timestamp", action="store_true", help="omit timing-dependent fields (fps=nan)")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="single-image inference FPS")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--warmup", type=int, default=10)
    common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("entropy", help="block-wise entropy change of two checkpoints")
    p.add_argument("--ckpt-a", type=Path, required=True)
    p.add_argument("--ckpt-b", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--svg", action="store_true")
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--probe", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label-a", default=None)
    p.add_argument("--label-b", default=None)
    p.add_argument("--no-timestamp", action="store_true")
    common(p)
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("pareto", help="mark the quality/FPS Pareto front of a metrics CSV")
    p.add_argument("--metrics", type=Path, required=True)
    p.add_argument("--x", choices=["fps"], default="fps")
    p.add_argument("--y", choices=["psnr", "ssim", "nmse"], default="psnr")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--svg", action="store_true")
    p.add_argument("--no-timestamp", action="store_true")
    common(p)
    p.set_defaults(func=cmd_pareto)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = args.threads
    if threads is None and "VRAE_THREADS" not in os.environ:
        threads = os.cpu_count() or 1
    try:
        set_threads(threads)
        return args.func(args)
    except (FileNotFoundError, CheckpointError, ValueError, OSError) as exc:
        print(f"vrae {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
