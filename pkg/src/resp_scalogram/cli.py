"""Command-line front end: resp-scalogram <subcommand> [options].

Every subcommand reads one RunConfig (``--config``, overridable by flags),
reads its inputs from and writes its artifacts under the output directory:

    segments/   preprocess     6 s cycle segments (.f32 + .json)
    emd/        emd            all IMFs per segment (.f32 rows + .json)
    images/     features       PNG scalograms, manifest.json, imf_selection.json
    split.json  split
    model.ckpt  train          plus train_log.csv, train_summary.json
    report.*    eval           plus confusion.csv
    analysis.txt analyze
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import TARGET_FS, __version__
from .config import RunConfig
from .dataset import ImageRef, LabelScheme, SplitManifest, map_label, split_by_patient
from .emd import decompose, select_max_correlated_imf
from .errors import ConfigError, DataError, EmptyManifest, ScalogramError
from .ingest import load_diagnosis_table, read_wav, scan_corpus
from .nn import analyze, build_proposed, load_checkpoint, save_checkpoint
from .nn.complexity import format_table
from .nn.train import TrainConfig, evaluate, train, write_log
from .preprocess import RETAINED_DISEASES, preprocess_recording, read_segment, write_segment
from .render import SegmentRef, augment, load_png, render, resize_bilinear, save_png, unit_image
from .scalogram import build_filter_bank, scalogram
from .synth import synthesize

log = logging.getLogger("resp_scalogram")


def _dump(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def _clean(directory: Path, patterns: tuple[str, ...]) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for pattern in patterns:
        for p in directory.glob(pattern):
            p.unlink()


def _segment_paths(out: Path) -> list[Path]:
    paths = sorted((out / "segments").glob("*.f32"))
    if not paths:
        raise EmptyManifest(f"no segments under {out / 'segments'}; run preprocess first")
    return paths


def _map(fn, items, threads: int):
    """Ordered map, optionally fanned out over worker processes."""
    if threads <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---- synth -----------------------------------------------------------------

def cmd_synth(cfg: RunConfig) -> int:
    counts = synthesize(cfg.paths.corpus, cfg.synth, cfg.seed)
    total = sum(counts.values())
    print(f"wrote {cfg.synth.patients_per_class * len(cfg.synth.classes)} recordings, "
          f"{total} cycles to {cfg.paths.corpus}")
    return 0


# ---- preprocess ------------------------------------------------------------

def format_summary(segments: Counter, majority: tuple[str, ...]) -> str:
    lines = [f"{'Class':<16}{'Segments':>10}{'Images':>10}"]
    for disease in RETAINED_DISEASES:
        n = segments.get(disease, 0)
        lines.append(f"{disease:<16}{n:>10}{n if disease in majority else 4 * n:>10}")
    total = sum(segments.get(d, 0) for d in RETAINED_DISEASES)
    images = sum(segments.get(d, 0) * (1 if d in majority else 4) for d in RETAINED_DISEASES)
    lines.append(f"{'Total':<16}{total:>10}{images:>10}")
    return "\n".join(lines)


def cmd_preprocess(cfg: RunConfig) -> int:
    corpus = Path(cfg.paths.corpus)
    diag_path = corpus / "diagnosis.csv"
    if not diag_path.is_file():
        raise DataError(f"{diag_path}: diagnosis table not found")
    diagnosis = load_diagnosis_table(diag_path)
    entries = scan_corpus(corpus, diagnosis)
    if not entries:
        raise EmptyManifest(f"no recordings under {corpus}")
    seg_dir = Path(cfg.paths.out) / "segments"
    _clean(seg_dir, ("*.f32", "*.json"))
    counts: Counter = Counter()
    dropped: Counter = Counter()
    for meta, cycles in entries:
        samples, fs = read_wav(meta.path)
        f = cfg.filter
        segs, drops = preprocess_recording(samples, fs, meta, cycles, diagnosis,
                                           f.low_hz, f.high_hz, f.order)
        for seg in segs:
            write_segment(seg_dir, seg)
            counts[seg.disease] += 1
        dropped.update(drops)
    summary = {"segments": dict(sorted(counts.items())),
               "dropped": {k: dropped.get(k, 0) for k in ("too_short", "excluded_class")}}
    _dump(Path(cfg.paths.out) / "preprocess_summary.json", summary)
    print(format_summary(counts, cfg.render.majority_classes))
    print(f"dropped: {summary['dropped']['too_short']} too short, "
          f"{summary['dropped']['excluded_class']} excluded class")
    return 0


# ---- emd / features --------------------------------------------------------

def _decompose(path: Path, emd):
    seg = read_segment(path)
    imfs = decompose(seg.samples, emd.max_imfs, emd.sd_threshold, emd.max_sifts)
    if imfs.n_imfs == 0:
        raise DataError(f"{path.name}: segment has no oscillatory content to decompose")
    index, coef = select_max_correlated_imf(seg.samples, imfs)
    return seg, imfs, {"imf": index, "coefficient": coef, "n_imfs": imfs.n_imfs}


def _emd_task(args):
    path, emd, emd_dir = args
    seg, imfs, sel = _decompose(path, emd)
    imfs.imfs.astype("<f4").tofile(emd_dir / f"{seg.key}.f32")
    sidecar = {"n_imfs": imfs.n_imfs, "n_samples": imfs.source_len,
               "selected_index": sel["imf"], "coefficient": sel["coefficient"]}
    _dump(emd_dir / f"{seg.key}.json", sidecar)
    return seg.key, sel


def cmd_emd(cfg: RunConfig) -> int:
    """Write every segment's IMFs as rows of a float32 matrix plus a JSON sidecar."""
    out = Path(cfg.paths.out)
    paths = _segment_paths(out)
    emd_dir = out / "emd"
    _clean(emd_dir, ("*.f32", "*.json"))
    results = _map(_emd_task, [(p, cfg.emd, emd_dir) for p in paths], cfg.threads)
    print(f"decomposed {len(results)} segments into {emd_dir}")
    return 0


_BANKS: dict = {}


def _feature_task(args):
    path, mode, emd, cwt, floor_db = args
    if mode == "hybrid":
        seg, imfs, sel = _decompose(path, emd)
        x = imfs.imf(sel["imf"])
    else:
        seg, sel = read_segment(path), None
        x = seg.samples
    bank_key = (x.size, cwt.gamma, cwt.time_bandwidth, cwt.voices_per_octave)
    if bank_key not in _BANKS:
        _BANKS.clear()
        _BANKS[bank_key] = build_filter_bank(x.size, TARGET_FS, cwt.gamma, cwt.time_bandwidth,
                                             cwt.voices_per_octave)
    unit = unit_image(scalogram(x, _BANKS[bank_key]).power, floor_db)
    return seg, unit, sel


def cmd_features(cfg: RunConfig) -> int:
    out = Path(cfg.paths.out)
    paths = _segment_paths(out)
    img_dir = out / "images"
    _clean(img_dir, ("*.png", "*.json"))
    tasks = [(p, cfg.mode, cfg.emd, cfg.cwt, cfg.render.floor_db) for p in paths]
    manifest, selection = [], {}
    for seg, unit, sel in _map(_feature_task, tasks, cfg.threads):
        ref = SegmentRef(seg.patient_id, seg.disease, seg.recording, seg.cycle_index)
        for job in augment([ref], cfg.seed, cfg.render.majority_classes):
            save_png(render(unit, job), img_dir)
            manifest.append({"path": job.filename, "patient": seg.patient_id,
                             "label": seg.disease, "segment": seg.key,
                             "colormap": job.colormap})
        if sel is not None:
            selection[seg.key] = sel
    _dump(img_dir / "manifest.json", {"mode": cfg.mode, "seed": cfg.seed, "images": manifest})
    if cfg.mode == "hybrid":
        _dump(img_dir / "imf_selection.json", selection)
    print(f"rendered {len(manifest)} images from {len(paths)} segments ({cfg.mode})")
    return 0


# ---- split -----------------------------------------------------------------

def cmd_split(cfg: RunConfig) -> int:
    out = Path(cfg.paths.out)
    manifest_path = out / "images" / "manifest.json"
    if not manifest_path.is_file():
        raise EmptyManifest(f"{manifest_path} not found; run features first")
    images = json.loads(manifest_path.read_text())["images"]
    refs = [ImageRef(d["path"], int(d["patient"]), d["label"]) for d in images]
    split = split_by_patient(refs, cfg.split.ratio, cfg.seed, cfg.label_scheme)
    split.save(out / "split.json")
    print(f"train {len(split.train)} images / {len({r.patient for r in split.train})} patients, "
          f"val {len(split.val)} images / {len({r.patient for r in split.val})} patients")
    for msg in split.shortfalls:
        print(f"warning: {msg}")
    return 0


# ---- train / eval ----------------------------------------------------------

def load_images(refs: list[ImageRef], directory: Path, size: int) -> np.ndarray:
    """Stack PNGs as float64 in [0, 1], bilinearly resized to ``size`` square if needed."""
    out = np.empty((len(refs), size, size, 3))
    for i, ref in enumerate(refs):
        img = load_png(directory / ref.path).astype(np.float64) / 255.0
        if img.shape[:2] != (size, size):
            img = resize_bilinear(img, size, size)
        out[i] = img
    return out


def _split_side(cfg: RunConfig, side: str):
    out = Path(cfg.paths.out)
    split_path = out / "split.json"
    if not split_path.is_file():
        raise EmptyManifest(f"{split_path} not found; run split first")
    split = SplitManifest.load(split_path)
    scheme = cfg.label_scheme
    refs = getattr(split, side)
    x = load_images(refs, out / "images", cfg.model.input_size)
    y = np.array([map_label(r.label, scheme) for r in refs], dtype=np.intp)
    return x, y


def _spec(cfg: RunConfig):
    s = cfg.model.input_size
    return build_proposed(cfg.label_scheme.n_classes, cfg.model.fc_widths, cfg.model.dropout,
                          (s, s, 3))


def cmd_train(cfg: RunConfig) -> int:
    out = Path(cfg.paths.out)
    x_train, y_train = _split_side(cfg, "train")
    x_val, y_val = _split_side(cfg, "val")
    if x_train.shape[0] == 0:
        raise EmptyManifest("training split is empty")
    spec = _spec(cfg)
    t = cfg.train
    tc = TrainConfig(t.lr, t.beta1, t.beta2, t.eps, t.batch, t.epochs, cfg.seed, t.dtype)

    def progress(r):
        print(f"epoch {r.epoch:3d}  train_loss {r.train_loss:.4f}  val_loss {r.val_loss:.4f}  "
              f"val_acc {r.val_accuracy:.4f}", flush=True)

    result = train(spec, x_train, y_train, x_val if len(x_val) else None,
                   y_val if len(y_val) else None, tc, progress=progress)
    save_checkpoint(out / "model.ckpt", spec, result.weights)
    write_log(out / "train_log.csv", result.log)
    _dump(out / "train_summary.json", {
        "initial_loss": result.initial_loss,
        "epochs": len(result.log),
        "final_val_accuracy": result.log[-1].val_accuracy if result.log else None,
        "n_train": int(x_train.shape[0]),
        "n_val": int(x_val.shape[0]),
    })
    if result.initial_loss is not None:
        print(f"initial loss {result.initial_loss:.4f}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    out = Path(cfg.paths.out)
    ckpt = out / "model.ckpt"
    if not ckpt.is_file():
        raise DataError(f"{ckpt} not found; run train first")
    spec, weights = load_checkpoint(ckpt)
    scheme = cfg.label_scheme
    x, y = _split_side(cfg, "val")
    if x.shape[0] == 0:
        raise EmptyManifest("validation split is empty")
    rep = evaluate(spec, weights, x, y, scheme.classes, scheme.healthy_index)
    (out / "report.json").write_text(rep.to_json() + "\n")
    (out / "report.txt").write_text(rep.to_text() + "\n")
    lines = [",".join(["truth\\pred", *scheme.classes])]
    lines += [",".join([name, *map(str, row)]) for name, row in zip(scheme.classes, rep.confusion)]
    (out / "confusion.csv").write_text("\n".join(lines) + "\n")
    print(rep.to_text())
    return 0


# ---- analyze ---------------------------------------------------------------

def cmd_analyze(cfg: RunConfig) -> int:
    rows, params, madds = analyze(_spec(cfg))
    table = format_table(rows, params, madds)
    out = Path(cfg.paths.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "analysis.txt").write_text(table + "\n")
    print(table)
    return 0


COMMANDS = {
    "synth": (cmd_synth, "generate a synthetic corpus"),
    "preprocess": (cmd_preprocess, "filter, resample and segment the corpus"),
    "emd": (cmd_emd, "decompose segments into IMFs and record the selected one"),
    "features": (cmd_features, "render scalogram images"),
    "split": (cmd_split, "patient-independent train/val split"),
    "train": (cmd_train, "train the CNN"),
    "eval": (cmd_eval, "score the validation split"),
    "analyze": (cmd_analyze, "per-layer shapes, parameters and MAdds"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--mode", choices=("hybrid", "conventional"))
    common.add_argument("--scheme", choices=[s.value for s in LabelScheme])
    common.add_argument("--threads", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--corpus", help="corpus directory")
    common.add_argument("--epochs", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="resp-scalogram", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    changes = {}
    for flag in ("seed", "mode", "scheme", "threads"):
        value = getattr(args, flag)
        if value is not None:
            changes[flag] = value
    if args.out is not None:
        changes["paths__out"] = args.out
    if args.corpus is not None:
        changes["paths__corpus"] = args.corpus
    if args.epochs is not None:
        changes["train__epochs"] = args.epochs
    return cfg.replace(**changes) if changes else cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command][0](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ScalogramError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
