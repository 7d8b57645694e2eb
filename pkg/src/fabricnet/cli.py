"""Command-line front end: synth, split, augment, tune, train, eval, predict.

One binary, shared --seed/--out-dir/--config discipline. Standard output is
reserved for `predict`; progress goes to standard error. Error families map
to exit codes: config=2, data=3, numeric=4, io=5.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_kv
from .data import (
    CLASS_NAMES,
    ClassLabel,
    Manifest,
    ManifestRow,
    SynthParams,
    augment,
    load_dataset,
    load_image,
    load_samples,
    model_input,
    split,
    synth_fabric,
    write_image,
)
from .errors import ConfigError, DataError, FabricnetError, NumericError, StorageError
from .layers import SpecTemplate, forward
from .metrics import confusion, emit, report
from .seeding import derive_seed
from .tensor import Tensor
from .train import HyperParams, load_checkpoint, save_checkpoint, train
from .tuning import SearchSpace, coordinate_search

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_IO = 5


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _parse_classes(text: str) -> list[ClassLabel]:
    try:
        values = [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad class list {text!r}: {exc}") from exc
    if not values or len(set(values)) != len(values):
        raise ConfigError(f"class list must be non-empty and unique, got {text!r}")
    return [ClassLabel.from_int(v) for v in values]


def _parse_ratios(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad ratio list {text!r}: {exc}") from exc
    if len(parts) != 3:
        raise ConfigError(f"need exactly three ratios, got {text!r}")
    return parts  # sum is validated by split()


def _config_overlay(args, keys: tuple[str, ...]) -> dict[str, str]:
    """Values from --config for any of `keys`; explicit flags take precedence."""
    if not getattr(args, "config", None):
        return {}
    kv = load_kv(args.config)
    return {k: v for k, v in kv.items() if k in keys}


def cmd_synth(args) -> int:
    classes = _parse_classes(args.classes)
    kv = _config_overlay(args, ("size", "tile", "noise"))
    for key in ("size", "tile", "noise"):
        value = getattr(args, key)
        if value is not None:  # explicit flags beat the config document
            kv[key] = str(value)
    params = SynthParams.from_kv(kv)
    if args.count < len(classes):
        raise ConfigError(
            f"count {args.count} cannot cover {len(classes)} classes with one image each"
        )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows: list[ManifestRow] = []
    for i in range(args.count):
        label = classes[i % len(classes)]  # round-robin keeps classes balanced
        name = f"fab_{i:05d}_c{int(label)}.png"
        sample = synth_fabric(label, params, derive_seed(args.seed, f"synth:{name}"),
                              source_id=name)
        write_image(sample.image, out_dir / name)
        rows.append(ManifestRow(path=name, label=label, provenance="synthetic"))
    Manifest(rows=rows).save(out_dir / "manifest.csv")
    _log(f"wrote {len(rows)} images and manifest.csv to {out_dir}")
    return 0


def cmd_split(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = Manifest.load(manifest_path)
    ratios = _parse_ratios(args.ratios)
    part_train, part_val, part_test = split(manifest, ratios, args.seed)
    tags = {r.path: r.split for part in (part_train, part_val, part_test) for r in part.rows}
    for row in manifest.rows:
        row.split = tags[row.path]
    manifest.save(manifest_path)
    _log(
        f"tagged {len(part_train)} train / {len(part_val)} val / "
        f"{len(part_test)} test rows in {manifest_path}"
    )
    return 0


def cmd_augment(args) -> int:
    manifest_path = Path(args.manifest)
    base = manifest_path.parent
    manifest = Manifest.load(manifest_path)
    if any(m.startswith("augment") for m in manifest.markers):
        raise DataError(f"{manifest_path}: already augmented (marker present)")
    if all(r.split is None for r in manifest.rows):
        raise DataError(f"{manifest_path}: rows carry no split tags; run split first")
    train_rows = manifest.with_split("train")
    if not train_rows:
        raise DataError(f"{manifest_path}: no train-tagged rows to augment")

    samples = load_samples(manifest, base, "train")
    grown = augment(samples, args.factor, args.seed)
    new_rows: list[ManifestRow] = []
    for sample in grown:
        if sample.provenance != "augmented":
            continue
        src, _, tag = sample.source_id.partition("#")
        stem = Path(src)
        name = str(stem.with_name(f"{stem.stem}_{tag}{stem.suffix}"))
        write_image(sample.image, base / name)
        new_rows.append(ManifestRow(path=name, label=sample.label,
                                    provenance="augmented", split="train"))
    manifest.rows.extend(new_rows)
    manifest.markers.append(f"augment factor={args.factor} seed={args.seed}")
    manifest.save(manifest_path)
    _log(f"train rows: {len(train_rows)} -> {len(train_rows) + len(new_rows)}")
    return 0


def _template_for(dataset) -> SpecTemplate:
    shape = dataset.images.shape[1:]
    return SpecTemplate(input_shape=shape, classes=len(CLASS_NAMES))


def cmd_tune(args) -> int:
    manifest = Manifest.load(Path(args.manifest))
    base = Path(args.manifest).parent
    train_set = load_dataset(manifest, base, "train")
    val_set = load_dataset(manifest, base, "val")
    space = SearchSpace.from_kv(load_kv(args.space))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    trials_path = out_dir / "trials.jsonl"
    with open(trials_path, "w", encoding="utf-8") as sink:
        def stream(record):
            sink.write(record.to_json() + "\n")
            status = "failed" if record.failed else f"val_acc={record.val_accuracy:.4f}"
            _log(f"trial {record.axis}={getattr(record.hp, record.axis)} {status}")

        best, trials = coordinate_search(space, _template_for(train_set),
                                         train_set, val_set, args.seed, on_trial=stream)
    (out_dir / "best.cfg").write_text(best.to_text(), encoding="utf-8")
    _log(f"{len(trials)} trials -> {trials_path}; winner -> {out_dir / 'best.cfg'}")
    return 0


def cmd_train(args) -> int:
    manifest = Manifest.load(Path(args.manifest))
    base = Path(args.manifest).parent
    train_set = load_dataset(manifest, base, "train")
    val_set = load_dataset(manifest, base, "val")
    hp = HyperParams.from_kv(load_kv(args.hp))
    if args.epochs is not None:
        hp = replace(hp, epochs=args.epochs)
    template = _template_for(train_set)
    spec = template.build(hp)
    _log(f"training {hp.epochs} epochs on {len(train_set)} samples")
    model, log = train(spec, hp, train_set, val_set, args.seed)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = out_dir / "model.ckpt"
    save_checkpoint(model, ckpt)
    (out_dir / "curves.csv").write_text(log.to_csv(), encoding="utf-8")
    from .plots import save_curves_figure

    save_curves_figure(log, out_dir / "curves.png")
    last = log.records[-1]
    _log(f"final val_acc={last.val_acc:.4f}; checkpoint -> {ckpt}")
    return 0


def cmd_eval(args) -> int:
    manifest = Manifest.load(Path(args.manifest))
    base = Path(args.manifest).parent
    test_set = load_dataset(manifest, base, "test")
    model = load_checkpoint(args.checkpoint)
    preds: list[int] = []
    for start in range(0, len(test_set), 64):
        batch = Tensor._wrap(test_set.images.array[start:start + 64])
        scores, _ = forward(model, batch)
        preds.extend(int(p) for p in np.argmax(scores.array, axis=1))
    cm = confusion(preds, test_set.labels.tolist(), model.spec.classes)
    rep = report(cm)
    out_dir = Path(args.out_dir)
    written = emit(rep, cm, None, out_dir)
    from .plots import save_confusion_figure

    written.append(save_confusion_figure(cm, out_dir / "confusion.png"))
    _log(f"overall accuracy {rep.overall_accuracy:.4f}; wrote {len(written)} files to {out_dir}")
    return 0


def cmd_predict(args) -> int:
    model = load_checkpoint(args.checkpoint)
    image = model_input(load_image(args.image))
    batch = Tensor._wrap(image.array[None, ...])
    scores, _ = forward(model, batch)
    label = int(np.argmax(scores.array[0]))
    confidence = float(scores.array[0, label])
    print(f"{label} {confidence:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fabricnet",
        description="Printed-fabric defect classification pipeline (3 classes: "
                    "defect-free, color spot, misprint).",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42,
                        help="base seed for every stochastic step (default 42)")
    common.add_argument("--out-dir", default=".",
                        help="directory for generated outputs (default .)")
    common.add_argument("--config", default=None,
                        help="key=value document supplying flag defaults")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic printed-fabric corpus")
    p.add_argument("--count", type=int, required=True, help="number of images to generate")
    p.add_argument("--classes", default="0,1,2",
                   help="comma-separated class labels to cycle through (default 0,1,2)")
    p.add_argument("--size", type=int, default=None, help="image side in pixels (default 64)")
    p.add_argument("--tile", type=int, default=None, help="motif tile period in pixels (default 8)")
    p.add_argument("--noise", type=float, default=None, help="base noise amplitude (default 0.02)")
    p.add_argument("--out", required=True, help="output directory for images and manifest.csv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", parents=[common],
                       help="tag manifest rows with a stratified train/val/test split")
    p.add_argument("--manifest", required=True, help="manifest.csv to tag in place")
    p.add_argument("--ratios", default="0.4,0.3,0.3",
                   help="train,val,test ratios (default 0.4,0.3,0.3)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("augment", parents=[common],
                       help="expand train-tagged rows with label-preserving transforms")
    p.add_argument("--manifest", required=True, help="split-tagged manifest.csv")
    p.add_argument("--factor", type=int, default=5,
                   help="total multiplier, original included (default 5)")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("tune", parents=[common],
                       help="coordinate search over hyperparameter axes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--space", required=True, help="search-space config document")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("train", parents=[common], help="train with fixed hyperparameters")
    p.add_argument("--manifest", required=True)
    p.add_argument("--hp", required=True, help="hyperparameter config document")
    p.add_argument("--epochs", type=int, default=None, help="override epochs from the config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="report metrics on the test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", parents=[common],
                       help="classify one image; prints 'label confidence'")
    p.add_argument("--image", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except DataError as exc:
        _log(f"data error: {exc}")
        return EXIT_DATA
    except NumericError as exc:
        _log(f"numeric error: {exc}")
        return EXIT_NUMERIC
    except (StorageError, OSError) as exc:
        _log(f"io error: {exc}")
        return EXIT_IO
    except FabricnetError as exc:  # any family not mapped above
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
