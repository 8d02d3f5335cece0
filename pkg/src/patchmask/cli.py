"""Command-line interface: synth | train | mask | eval | sweep.

Every subcommand reads optional flat key=value config files, lets flags
override file values, and writes a run manifest recording the fully resolved
configuration plus sha256 checksums of all artifacts.  Manifests are
themselves valid config files, so a run can be repeated with --config
pointing at a previous manifest.  Exit codes: 0 success, 2 invalid
configuration or missing inputs, 1 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .imagery import load_image, load_mask, save_image, save_mask
from .patching import mask_to_pixels
from .synth import SceneConfig, generate_scene
from .trainer import (
    FEATURE_SOURCES,
    METRIC_MODES,
    PixelModel,
    TrainConfig,
    evaluate,
    masks_from_images,
    train,
)

SWEEP_AXES = ("patch-size", "warmup-steps", "metric-mode")


class CliError(Exception):
    """User-facing failure with an explicit exit code."""

    def __init__(self, message: str, code: int = 2):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# key=value config files and manifests


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _fmt_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_config(path: Path) -> dict[str, str]:
    """Read a key=value file, skipping comments and manifest-only keys."""
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in ("command", "tool_version") or key.startswith("checksum."):
            continue
        out[key] = value.strip()
    return out


def write_manifest(path: Path, command: str, entries: dict, checksums: dict[str, str]) -> None:
    lines = [f"command={command}", f"tool_version={__version__}"]
    lines += [f"{k}={_fmt_value(v)}" for k, v in entries.items()]
    lines += [f"checksum.{name}={digest}" for name, digest in sorted(checksums.items())]
    path.write_text("\n".join(lines) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class _Resolver:
    """Merge precedence: command-line flag, then config file, then default."""

    def __init__(self, args: argparse.Namespace, config_path: str | None):
        self.args = args
        self.file = read_config(Path(config_path)) if config_path else {}

    def get(self, name: str, cast, default):
        flag = getattr(self.args, name, None)
        if flag is not None:
            return flag
        if name in self.file:
            raw = self.file[name]
            if raw == "":
                return default
            try:
                return cast(raw)
            except ValueError as exc:
                raise CliError(f"config key {name}: {exc}") from exc
        return default


# ---------------------------------------------------------------------------
# shared scene/run loading


def _load_scene_dir(manifest_path: Path):
    """Views, clean image, and ground-truth masks recorded by a synth manifest."""
    if not manifest_path.is_file():
        raise CliError(f"scene manifest not found: {manifest_path}")
    entries = read_config(manifest_path)
    if "num_views" not in entries:
        raise CliError(f"{manifest_path} is not a scene manifest (no num_views)")
    num_views = int(entries["num_views"])
    scene_dir = manifest_path.parent
    views = [load_image(scene_dir / f"view_{i:04d}.png") for i in range(num_views)]
    clean_path = scene_dir / "clean.png"
    clean = load_image(clean_path) if clean_path.is_file() else None
    gt_masks = []
    for i in range(num_views):
        p = scene_dir / f"gtmask_{i:04d}.png"
        gt_masks.append(load_mask(p) if p.is_file() else None)
    return views, clean, gt_masks


def _list_images(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise CliError(f"not a directory: {directory}")
    files = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in (".png", ".ppm") and p.is_file()
    )
    if not files:
        raise CliError(f"no .png or .ppm images in {directory}")
    return files


def _require_out_dir(raw: str | None) -> Path:
    if not raw:
        raise CliError("an output directory is required (--out-dir or config out_dir)")
    out = Path(raw)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# synth


def _add_synth_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file (flags override it)")
    p.add_argument("--out-dir", dest="out_dir", help="directory for scene artifacts")
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--num-views", dest="num_views", type=int)
    p.add_argument("--distractor-view-fraction", dest="distractor_view_fraction", type=float)
    p.add_argument("--distractors-min", dest="distractors_min", type=int)
    p.add_argument("--distractors-max", dest="distractors_max", type=int)
    p.add_argument("--size-min", dest="size_min", type=int)
    p.add_argument("--size-max", dest="size_max", type=int)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--exposure-jitter", dest="exposure_jitter", type=float)
    p.add_argument("--hard-mode", dest="hard_mode", action=argparse.BooleanOptionalAction)
    p.add_argument("--seed", type=int)


def _scene_config(res: _Resolver) -> SceneConfig:
    defaults = SceneConfig()
    return SceneConfig(
        height=res.get("height", int, defaults.height),
        width=res.get("width", int, defaults.width),
        num_views=res.get("num_views", int, defaults.num_views),
        distractor_view_fraction=res.get(
            "distractor_view_fraction", float, defaults.distractor_view_fraction
        ),
        distractors_per_view=(
            res.get("distractors_min", int, defaults.distractors_per_view[0]),
            res.get("distractors_max", int, defaults.distractors_per_view[1]),
        ),
        distractor_size=(
            res.get("size_min", int, defaults.distractor_size[0]),
            res.get("size_max", int, defaults.distractor_size[1]),
        ),
        noise_sigma=res.get("noise_sigma", float, defaults.noise_sigma),
        exposure_jitter=res.get("exposure_jitter", float, defaults.exposure_jitter),
        seed=res.get("seed", int, defaults.seed),
        hard_mode=res.get("hard_mode", _parse_bool, defaults.hard_mode),
    )


def _scene_entries(config: SceneConfig, out_dir: Path) -> dict:
    return {
        "out_dir": out_dir,
        "height": config.height,
        "width": config.width,
        "num_views": config.num_views,
        "distractor_view_fraction": config.distractor_view_fraction,
        "distractors_min": config.distractors_per_view[0],
        "distractors_max": config.distractors_per_view[1],
        "size_min": config.distractor_size[0],
        "size_max": config.distractor_size[1],
        "noise_sigma": config.noise_sigma,
        "exposure_jitter": config.exposure_jitter,
        "seed": config.seed,
        "hard_mode": config.hard_mode,
    }


def cmd_synth(args: argparse.Namespace) -> int:
    res = _Resolver(args, args.config)
    config = _scene_config(res)
    config.validate()
    out_dir = _require_out_dir(res.get("out_dir", str, None))

    scene = generate_scene(config)
    checksums: dict[str, str] = {}

    def _save_img(name: str, img) -> None:
        save_image(img, out_dir / name)
        checksums[name] = _sha256(out_dir / name)

    _save_img("clean.png", scene.clean)
    for i, view in enumerate(scene.views):
        _save_img(f"view_{i:04d}.png", view)
    for i, mask in enumerate(scene.gt_static_masks):
        name = f"gtmask_{i:04d}.png"
        save_mask(mask, out_dir / name)
        checksums[name] = _sha256(out_dir / name)

    write_manifest(out_dir / "manifest.txt", "synth", _scene_entries(config, out_dir), checksums)
    print(f"wrote {len(scene.views)} views to {out_dir} ({len(scene.corrupted_indices)} corrupted)")
    return 0


# ---------------------------------------------------------------------------
# train


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file (flags override it)")
    p.add_argument("--scene", help="path to a synth manifest")
    p.add_argument("--out-dir", dest="out_dir", help="directory for run artifacts")
    p.add_argument("--steps", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--ssim-weight", dest="ssim_weight", type=float)
    p.add_argument("--patch-size", dest="patch_size", type=int)
    p.add_argument("--warmup-steps", dest="warmup_steps", type=int)
    p.add_argument("--mask-update-interval", dest="mask_update_interval", type=int)
    p.add_argument("--metric-mode", dest="metric_mode", choices=METRIC_MODES)
    p.add_argument("--feature-source", dest="feature_source", choices=FEATURE_SOURCES)
    p.add_argument("--feature-dir", dest="feature_dir")
    p.add_argument("--feature-levels", dest="feature_levels", type=int)
    p.add_argument("--percentile-level", dest="percentile_level", type=float)
    p.add_argument("--log-interval", dest="log_interval", type=int)
    p.add_argument("--seed", type=int)


def _train_config(res: _Resolver) -> TrainConfig:
    d = TrainConfig()
    return TrainConfig(
        steps=res.get("steps", int, d.steps),
        learning_rate=res.get("learning_rate", float, d.learning_rate),
        ssim_weight=res.get("ssim_weight", float, d.ssim_weight),
        patch_size=res.get("patch_size", int, d.patch_size),
        warmup_steps=res.get("warmup_steps", int, d.warmup_steps),
        mask_update_interval=res.get("mask_update_interval", int, d.mask_update_interval),
        metric_mode=res.get("metric_mode", str, d.metric_mode),
        feature_source=res.get("feature_source", str, d.feature_source),
        feature_dir=res.get("feature_dir", str, d.feature_dir) or None,
        feature_levels=res.get("feature_levels", int, d.feature_levels),
        percentile_level=res.get("percentile_level", float, d.percentile_level),
        log_interval=res.get("log_interval", int, d.log_interval),
        seed=res.get("seed", int, d.seed),
    )


def _train_entries(config: TrainConfig, scene: str, out_dir: Path) -> dict:
    return {
        "scene": scene,
        "out_dir": out_dir,
        "steps": config.steps,
        "learning_rate": config.learning_rate,
        "ssim_weight": config.ssim_weight,
        "patch_size": config.patch_size,
        "warmup_steps": config.warmup_steps,
        "mask_update_interval": config.mask_update_interval,
        "metric_mode": config.metric_mode,
        "feature_source": config.feature_source,
        "feature_dir": config.feature_dir,
        "feature_levels": config.feature_levels,
        "percentile_level": config.percentile_level,
        "log_interval": config.log_interval,
        "seed": config.seed,
    }


def _write_history_csv(path: Path, history) -> None:
    lines = ["step,loss,psnr,static_fraction"]
    for step, loss, psnr_v, sf in zip(
        history.steps, history.losses, history.psnrs, history.static_fractions
    ):
        lines.append(
            f"{step},{format(loss, '.6g')},{format(psnr_v, '.6g')},{format(sf, '.6g')}"
        )
    path.write_text("\n".join(lines) + "\n")


def cmd_train(args: argparse.Namespace) -> int:
    res = _Resolver(args, args.config)
    config = _train_config(res)
    config.validate()
    scene_path = res.get("scene", str, None)
    if not scene_path:
        raise CliError("a scene manifest is required (--scene or config scene)")
    views, clean, _ = _load_scene_dir(Path(scene_path))
    out_dir = _require_out_dir(res.get("out_dir", str, None))

    if config.warmup_steps > config.steps:
        print(
            f"warning: warmup_steps ({config.warmup_steps}) exceeds steps "
            f"({config.steps}); masks never activate",
            file=sys.stderr,
        )

    model, masks, history = train(views, config, clean)

    checksums: dict[str, str] = {}
    save_image(np.clip(model.estimate, 0.0, 1.0), out_dir / "final.png")
    checksums["final.png"] = _sha256(out_dir / "final.png")
    for i, mask in enumerate(masks):
        name = f"mask_{i:04d}.png"
        save_mask(mask, out_dir / name)
        checksums[name] = _sha256(out_dir / name)
    _write_history_csv(out_dir / "history.csv", history)
    checksums["history.csv"] = _sha256(out_dir / "history.csv")

    entries = _train_entries(config, scene_path, out_dir)
    entries["mask_update_steps"] = ",".join(str(s) for s in history.mask_update_steps)
    write_manifest(out_dir / "manifest.txt", "train", entries, checksums)
    final_loss = history.losses[-1] if history.losses else float("nan")
    print(f"trained {config.steps} steps; final logged loss {format(final_loss, '.6g')}")
    return 0


# ---------------------------------------------------------------------------
# mask (one-shot classification)


def _add_mask_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file (flags override it)")
    p.add_argument("--rendered-dir", dest="rendered_dir", help="directory of rendered images")
    p.add_argument("--reference-dir", dest="reference_dir", help="directory of reference images")
    p.add_argument("--out-dir", dest="out_dir", help="directory for mask artifacts")
    p.add_argument("--feature-dir", dest="feature_dir", help="directory of feat_####.fstk stacks")
    p.add_argument("--patch-size", dest="patch_size", type=int)
    p.add_argument("--metric-mode", dest="metric_mode", choices=METRIC_MODES)
    p.add_argument("--feature-levels", dest="feature_levels", type=int)
    p.add_argument("--percentile-level", dest="percentile_level", type=float)
    p.add_argument("--seed", type=int)


def cmd_mask(args: argparse.Namespace) -> int:
    res = _Resolver(args, args.config)
    rendered_dir = res.get("rendered_dir", str, None)
    reference_dir = res.get("reference_dir", str, None)
    if not rendered_dir or not reference_dir:
        raise CliError("both --rendered-dir and --reference-dir are required")
    rendered_files = _list_images(Path(rendered_dir))
    reference_files = _list_images(Path(reference_dir))
    if len(rendered_files) != len(reference_files):
        raise CliError(
            f"image counts differ: {len(rendered_files)} rendered vs "
            f"{len(reference_files)} reference"
        )
    feature_dir = res.get("feature_dir", str, None) or None
    d = TrainConfig()
    config = TrainConfig(
        patch_size=res.get("patch_size", int, d.patch_size),
        metric_mode=res.get("metric_mode", str, d.metric_mode),
        feature_source="fstk" if feature_dir else "builtin",
        feature_dir=feature_dir,
        feature_levels=res.get("feature_levels", int, d.feature_levels),
        percentile_level=res.get("percentile_level", float, d.percentile_level),
        seed=res.get("seed", int, d.seed),
    )
    config.validate()
    out_dir = _require_out_dir(res.get("out_dir", str, None))

    rendered = [load_image(p) for p in rendered_files]
    references = [load_image(p) for p in reference_files]
    patch_masks = masks_from_images(rendered, references, config)

    checksums: dict[str, str] = {}
    for i, pm in enumerate(patch_masks):
        name = f"mask_{i:04d}.png"
        save_mask(mask_to_pixels(pm), out_dir / name)
        checksums[name] = _sha256(out_dir / name)

    entries = {
        "rendered_dir": rendered_dir,
        "reference_dir": reference_dir,
        "out_dir": out_dir,
        "feature_dir": config.feature_dir,
        "patch_size": config.patch_size,
        "metric_mode": config.metric_mode,
        "feature_source": config.feature_source,
        "feature_levels": config.feature_levels,
        "percentile_level": config.percentile_level,
        "seed": config.seed,
    }
    write_manifest(out_dir / "manifest.txt", "mask", entries, checksums)
    static = float(np.mean([pm.values.mean() for pm in patch_masks]))
    print(f"wrote {len(patch_masks)} masks to {out_dir} (static fraction {static:.4f})")
    return 0


# ---------------------------------------------------------------------------
# eval


def _add_eval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file (flags override it)")
    p.add_argument("--run-dir", dest="run_dir", help="train output directory")
    p.add_argument("--scene", help="path to a synth manifest")


def _load_run_masks(run_dir: Path, count: int) -> list[np.ndarray]:
    masks = []
    for i in range(count):
        p = run_dir / f"mask_{i:04d}.png"
        if not p.is_file():
            raise CliError(f"missing mask artifact: {p}")
        masks.append(load_mask(p))
    return masks


def cmd_eval(args: argparse.Namespace) -> int:
    res = _Resolver(args, args.config)
    run_dir_raw = res.get("run_dir", str, None)
    scene_path = res.get("scene", str, None)
    if not run_dir_raw or not scene_path:
        raise CliError("both --run-dir and --scene are required")
    run_dir = Path(run_dir_raw)
    final_path = run_dir / "final.png"
    if not final_path.is_file():
        raise CliError(f"missing final image: {final_path}")
    views, clean, gt_masks = _load_scene_dir(Path(scene_path))
    if clean is None:
        raise CliError(f"scene at {scene_path} has no clean.png")
    if any(g is None for g in gt_masks):
        raise CliError(f"scene at {scene_path} is missing gtmask files")

    estimate = load_image(final_path)
    masks = _load_run_masks(run_dir, len(views))
    model = PixelModel(estimate=estimate, num_views=len(views))
    report = evaluate(model, clean, masks, gt_masks)
    static = float(np.mean([m.mean() for m in masks]))

    lines = [
        "psnr,ssim,mask_iou,static_fraction",
        f"{format(report.psnr, '.6g')},{format(report.ssim, '.6g')},"
        f"{format(report.mask_iou, '.6g')},{format(static, '.6g')}",
    ]
    csv_text = "\n".join(lines) + "\n"
    (run_dir / "eval.csv").write_text(csv_text)
    print(csv_text, end="")
    return 0


# ---------------------------------------------------------------------------
# sweep


def _add_sweep_flags(p: argparse.ArgumentParser) -> None:
    _add_train_flags(p)
    p.add_argument("--axis", choices=SWEEP_AXES, help="configuration axis to sweep")
    p.add_argument("--values", help="comma-separated axis values")


def cmd_sweep(args: argparse.Namespace) -> int:
    res = _Resolver(args, args.config)
    axis = res.get("axis", str, None)
    if axis not in SWEEP_AXES:
        raise CliError(f"--axis must be one of {SWEEP_AXES}, got {axis!r}")
    raw_values = res.get("values", str, "") or ""
    tokens = [t.strip() for t in raw_values.split(",") if t.strip()]
    if not tokens:
        raise CliError("--values must list at least one axis value")
    scene_path = res.get("scene", str, None)
    if not scene_path:
        raise CliError("a scene manifest is required (--scene or config scene)")
    views, clean, gt_masks = _load_scene_dir(Path(scene_path))
    if clean is None:
        raise CliError(f"scene at {scene_path} has no clean.png")
    if any(g is None for g in gt_masks):
        raise CliError(f"scene at {scene_path} is missing gtmask files")
    out_dir = _require_out_dir(res.get("out_dir", str, None))
    base = _train_config(res)

    def _configured(token: str) -> TrainConfig:
        cfg = TrainConfig(**vars(base))
        if axis == "patch-size":
            cfg.patch_size = int(token)
        elif axis == "warmup-steps":
            cfg.warmup_steps = int(token)
        else:
            cfg.metric_mode = token
        cfg.validate()
        return cfg

    configs = [_configured(t) for t in tokens]

    lines = ["axis,value,psnr,ssim,mask_iou"]
    for token, cfg in zip(tokens, configs):
        model, masks, _ = train(views, cfg, clean)
        report = evaluate(model, clean, masks, gt_masks)
        lines.append(
            f"{axis},{token},{format(report.psnr, '.6g')},"
            f"{format(report.ssim, '.6g')},{format(report.mask_iou, '.6g')}"
        )
    csv_text = "\n".join(lines) + "\n"
    (out_dir / "sweep.csv").write_text(csv_text)

    checksums = {"sweep.csv": _sha256(out_dir / "sweep.csv")}
    entries = _train_entries(base, scene_path, out_dir)
    entries["axis"] = axis
    entries["values"] = ",".join(tokens)
    write_manifest(out_dir / "manifest.txt", "sweep", entries, checksums)
    print(csv_text, end="")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchmask",
        description="Patch-wise static/transient classification for multi-view reconstruction",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multi-view scene")
    _add_synth_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="run the masked reconstruction loop on a scene")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("mask", help="one-shot mask classification for image pairs")
    _add_mask_flags(p)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("eval", help="score a trained run against its scene")
    _add_eval_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train across one configuration axis")
    _add_sweep_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
