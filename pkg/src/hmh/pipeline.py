"""Batch construction of the HMH dataset and batch evaluation.

Corpus layout expected by :func:`prepare`::

    corpus_dir/images/<id>.{png,jpg,jpeg,bmp}
    corpus_dir/alphas/<id>.png            # grayscale, or RGBA using its A channel

Manifests are JSON-lines files, one record per line, with paths stored
relative to the manifest's directory so a dataset tree can be moved or
compared byte for byte.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import adjust
from .adjust import AdjustmentSpec, apply_adjustment, image_rng, sample_adjustment
from .imgcore import (ImageError, from_uint8, read_alpha, read_rgb, resize_bilinear,
                      to_uint8, write_gray, write_rgb)
from .matting import composite, extract_foreground, generate_trimap
from .metrics import MattingScore, evaluate_matting, mos_aggregate

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")
CORPUS_MANIFEST = "corpus.jsonl"
TRIPLET_MANIFEST = "triplets.jsonl"


@dataclass
class CorpusRecord:
    image_id: str
    image: str
    alpha: str
    foreground: str
    background: str
    width: int
    height: int
    split: Optional[str] = None
    record: str = field(default="corpus", repr=False)


@dataclass
class TripletRecord:
    image_id: str
    alpha: str
    image: str
    disharmonious: str
    trimap: str
    background: str
    composite_alpha: str
    adjustment: AdjustmentSpec
    target_image: Optional[str] = None
    split: Optional[str] = None
    record: str = field(default="triplet", repr=False)


@dataclass
class RunReport:
    """Outcome of a batch step: records written plus per-item problems."""

    records: list
    failures: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _record_to_dict(rec) -> dict:
    d = asdict(rec)
    if isinstance(rec, TripletRecord):
        d["adjustment"] = rec.adjustment.to_dict()
    return d


def _record_from_dict(d: dict):
    kind = d.get("record")
    if kind == "corpus":
        return CorpusRecord(**d)
    if kind == "triplet":
        d = dict(d)
        d["adjustment"] = AdjustmentSpec.from_dict(d["adjustment"])
        return TripletRecord(**d)
    raise ValueError(f"unknown manifest record type {kind!r}")


def serialize_manifest(records) -> str:
    return "".join(json.dumps(_record_to_dict(r), ensure_ascii=False) + "\n" for r in records)


def parse_manifest(text: str) -> list:
    return [_record_from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


def write_manifest(path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_manifest(records), encoding="utf-8")


def read_manifest(path) -> list:
    return parse_manifest(Path(path).read_text(encoding="utf-8"))


def _relpath(path, base) -> str:
    return Path(os.path.relpath(Path(path).resolve(), Path(base).resolve())).as_posix()


def _abs(rel: str, base: Path) -> Path:
    return (Path(base) / rel).resolve()


def _index_images(directory: Path) -> dict:
    if not directory.is_dir():
        return {}
    return {p.stem: p for p in sorted(directory.iterdir())
            if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS}


def _run(func, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items, chunksize=max(1, len(items) // (4 * jobs))))


def _quantized(arr):
    return from_uint8(to_uint8(arr))


def _prepare_one(args):
    image_id, image_path, alpha_path, out_dir, size, mask_dilation = args
    try:
        img = _quantized(resize_bilinear(read_rgb(image_path), size, size))
        alpha = _quantized(resize_bilinear(read_alpha(alpha_path), size, size))
        fg = extract_foreground(img, alpha)
        bg = adjust.inpaint_background(img, alpha, mask_dilation)
        name = f"{image_id}.png"
        paths = {k: out_dir / k / name for k in ("I", "A", "F", "B")}
        write_rgb(paths["I"], img)
        write_gray(paths["A"], alpha)
        write_rgb(paths["F"], fg)
        write_rgb(paths["B"], bg)
    except (OSError, ValueError) as exc:
        return image_id, None, f"{type(exc).__name__}: {exc}"
    rec = CorpusRecord(image_id=image_id, image=_relpath(paths["I"], out_dir),
                       alpha=_relpath(paths["A"], out_dir), foreground=_relpath(paths["F"], out_dir),
                       background=_relpath(paths["B"], out_dir), width=size, height=size)
    return image_id, rec, None


def prepare(corpus_dir, out_dir, size: int = 256, mask_dilation: int = adjust.DEFAULT_MASK_DILATION,
            jobs: int = 1) -> RunReport:
    """Resize every image/alpha pair, split it into foreground F and inpainted
    background B, and write ``I/ A/ F/ B/`` plus ``corpus.jsonl`` under
    ``out_dir``."""
    if size < 1:
        raise ValueError(f"size must be >= 1, got {size}")
    corpus_dir, out_dir = Path(corpus_dir), Path(out_dir)
    images = _index_images(corpus_dir / "images")
    alphas = _index_images(corpus_dir / "alphas")
    report = RunReport(records=[])
    for stem in sorted(images.keys() - alphas.keys()):
        report.warnings.append(f"{stem}: image without alpha, skipped")
    for stem in sorted(alphas.keys() - images.keys()):
        report.warnings.append(f"{stem}: alpha without image, skipped")
    for w in report.warnings:
        log.warning(w)

    out_dir.mkdir(parents=True, exist_ok=True)
    paired = sorted(images.keys() & alphas.keys())
    items = [(s, images[s], alphas[s], out_dir, size, mask_dilation) for s in paired]
    for image_id, rec, err in _run(_prepare_one, items, jobs):
        if err:
            report.failures[image_id] = err
            log.error("%s: %s", image_id, err)
        else:
            report.records.append(rec)
    write_manifest(out_dir / CORPUS_MANIFEST, report.records)
    return report


def parse_override(text: str, seed: int) -> AdjustmentSpec:
    """Turn ``kind:value`` into a fixed adjustment, e.g. ``illumination:1.0``,
    ``color_enhance:1.8`` or ``color_transfer:<target_id>``."""
    kind, sep, value = text.partition(":")
    kind = kind.strip().replace("-", "_")
    if not sep or not value:
        raise ValueError(f"adjustment override must look like kind:value, got {text!r}")
    if kind == adjust.COLOR_TRANSFER:
        return AdjustmentSpec(kind, seed, target_id=value.strip())
    return AdjustmentSpec(kind, seed, factor=float(value))


def _predicted_alpha_dir(alpha_source: str) -> Optional[Path]:
    if alpha_source in (None, "", "groundtruth"):
        return None
    prefix = "predicted:"
    if not alpha_source.startswith(prefix) or len(alpha_source) == len(prefix):
        raise ValueError(f"alpha source must be 'groundtruth' or 'predicted:<dir>', got {alpha_source!r}")
    return Path(alpha_source[len(prefix):])


def render_disharmonious(image, comp_alpha, background, spec: AdjustmentSpec, target=None) -> np.ndarray:
    """``I_d = alpha * I + (1 - alpha) * adjust(B)``, quantized to 8 bit."""
    return to_uint8(composite(image, comp_alpha, apply_adjustment(background, spec, target)))


def _triplet_one(args):
    rec, corpus_base, out_dir, spec, target_rec, pred_dir, band_radius = args
    image_id = rec.image_id
    try:
        if spec is None:
            raise ValueError("no adjustment could be sampled")
        img_path = _abs(rec.image, corpus_base)
        alpha_path = _abs(rec.alpha, corpus_base)
        bg_path = _abs(rec.background, corpus_base)
        img = read_rgb(img_path)
        alpha = read_alpha(alpha_path)
        bg = read_rgb(bg_path)
        comp_alpha_path = alpha_path
        comp_alpha = alpha
        if pred_dir is not None:
            candidates = _index_images(pred_dir)
            if image_id not in candidates:
                raise FileNotFoundError(f"no predicted alpha for {image_id} in {pred_dir}")
            comp_alpha_path = out_dir / "A_used" / f"{image_id}.png"
            raw = read_alpha(candidates[image_id])
            comp_alpha = _quantized(resize_bilinear(raw, img.shape[1], img.shape[0]))
            write_gray(comp_alpha_path, comp_alpha)
        target = target_path = None
        if spec.kind == adjust.COLOR_TRANSFER:
            if target_rec is None:
                raise ValueError(f"target {spec.target_id!r} is not in the corpus manifest")
            target_path = _abs(target_rec.image, corpus_base)
            target = read_rgb(target_path)
        dis = render_disharmonious(img, comp_alpha, bg, spec, target)
        dis_path = out_dir / "I_d" / f"{image_id}.png"
        trimap_path = out_dir / "T" / f"{image_id}.png"
        write_rgb(dis_path, from_uint8(dis))
        write_gray(trimap_path, generate_trimap(alpha, band_radius))
    except (OSError, ValueError) as exc:
        return image_id, None, f"{type(exc).__name__}: {exc}"
    out = TripletRecord(
        image_id=image_id,
        alpha=_relpath(alpha_path, out_dir),
        image=_relpath(img_path, out_dir),
        disharmonious=_relpath(dis_path, out_dir),
        trimap=_relpath(trimap_path, out_dir),
        background=_relpath(bg_path, out_dir),
        composite_alpha=_relpath(comp_alpha_path, out_dir),
        adjustment=spec,
        target_image=None if target_path is None else _relpath(target_path, out_dir),
        split=rec.split,
    )
    return image_id, out, None


def build_triplets(manifest_path, out_dir, seed: int = 0, band_radius: int = 10,
                   alpha_source: str = "groundtruth", adjust_override: Optional[str] = None,
                   jobs: int = 1) -> RunReport:
    """Synthesize one (A, I, I_d) triplet per prepared record.

    Color-transfer targets are drawn from the ``train`` records when the
    manifest carries split labels, otherwise from the whole corpus.
    """
    manifest_path, out_dir = Path(manifest_path), Path(out_dir)
    corpus = [r for r in read_manifest(manifest_path) if isinstance(r, CorpusRecord)]
    corpus_base = manifest_path.parent
    by_id = {r.image_id: r for r in corpus}
    labelled = any(r.split is not None for r in corpus)
    pool = [r.image_id for r in corpus if not labelled or r.split == "train"]
    pred_dir = _predicted_alpha_dir(alpha_source)
    fixed = parse_override(adjust_override, seed) if adjust_override else None

    report = RunReport(records=[])
    items = []
    for rec in corpus:
        spec = fixed
        if spec is None:
            try:
                spec = sample_adjustment(seed, rec.image_id, pool)
            except ValueError as exc:
                report.failures[rec.image_id] = f"ValueError: {exc}"
                continue
        target_rec = by_id.get(spec.target_id) if spec.target_id else None
        items.append((rec, corpus_base, out_dir, spec, target_rec, pred_dir, band_radius))

    out_dir.mkdir(parents=True, exist_ok=True)
    for image_id, rec, err in _run(_triplet_one, items, jobs):
        if err:
            report.failures[image_id] = err
            log.error("%s: %s", image_id, err)
        else:
            report.records.append(rec)
    write_manifest(out_dir / TRIPLET_MANIFEST, report.records)
    return report


def regenerate_disharmonious(rec: TripletRecord, manifest_dir) -> np.ndarray:
    """Recompute a triplet's 8-bit I_d from its stored files and adjustment."""
    base = Path(manifest_dir)
    target = read_rgb(_abs(rec.target_image, base)) if rec.target_image else None
    return render_disharmonious(read_rgb(_abs(rec.image, base)), read_alpha(_abs(rec.composite_alpha, base)),
                                read_rgb(_abs(rec.background, base)), rec.adjustment, target)


def assign_split(image_ids, train_fraction: float, seed: int) -> dict:
    """Map each id to ``train`` or ``test``: seeded shuffle of the sorted ids,
    the first ``ceil(N * train_fraction)`` are train."""
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    ids = sorted(image_ids)
    order = np.random.default_rng(seed).permutation(len(ids))
    # round first so 10 * 0.9 cannot ceil to 10
    n_train = math.ceil(round(len(ids) * train_fraction, 9))
    return {ids[j]: ("train" if rank < n_train else "test") for rank, j in enumerate(order)}


def split(manifest_path, train_fraction: float = 0.9, seed: int = 0, out_path=None) -> list:
    """Label every record of a manifest in place (or into ``out_path``)."""
    manifest_path = Path(manifest_path)
    records = read_manifest(manifest_path)
    labels = assign_split([r.image_id for r in records], train_fraction, seed)
    for r in records:
        r.split = labels[r.image_id]
    if out_path is not None and Path(out_path).resolve() != manifest_path.resolve():
        out_path = Path(out_path)
        # keep relative paths valid from the new location
        for r in records:
            for f in fields(r):
                val = getattr(r, f.name)
                if f.name in {"image", "alpha", "foreground", "background", "disharmonious",
                              "trimap", "composite_alpha", "target_image"} and val:
                    setattr(r, f.name, _relpath(_abs(val, manifest_path.parent), out_path.parent))
        write_manifest(out_path, records)
    else:
        write_manifest(manifest_path, records)
    return records


def center_square(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    return img[top:top + side, left:left + side]


def composite_new_background(image, alpha, background_dir, seed: int = 0, image_id: str = "") -> np.ndarray:
    """Paste the portrait onto a randomly picked background from ``background_dir``.

    The pick depends only on ``(seed, image_id)``. Undecodable files are
    skipped and the next candidate from the same seeded order is tried.
    """
    candidates = list(_index_images(Path(background_dir)).values())
    if not candidates:
        raise FileNotFoundError(f"no background images in {background_dir}")
    h, w = image.shape[:2]
    for j in image_rng(seed, image_id).permutation(len(candidates)):
        try:
            bg = read_rgb(candidates[j])
        except OSError as exc:
            log.warning("skipping undecodable background %s: %s", candidates[j], exc)
            continue
        return composite(image, alpha, resize_bilinear(center_square(bg), w, h))
    raise ImageError(f"none of the {len(candidates)} backgrounds in {background_dir} could be decoded")


@dataclass
class MattingEval:
    scores: dict
    means: Optional[MattingScore]
    failures: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


def _mean_score(scores) -> MattingScore:
    vals = list(scores)
    return MattingScore(
        mse=float(np.mean([s.mse for s in vals])),
        sad=float(np.mean([s.sad for s in vals])),
        grad=float(np.mean([s.grad for s in vals])),
        conn=float(np.mean([s.conn for s in vals])),
        unknown_pixel_count=int(sum(s.unknown_pixel_count for s in vals)),
    )


def _read_trimap(path) -> np.ndarray:
    from PIL import Image
    with Image.open(path) as im:
        return np.asarray(im.convert("L"))


def eval_matting(pred_dir, gt_dir, trimap_dir, **metric_kwargs) -> MattingEval:
    """Score every ground-truth matte against the prediction of the same id."""
    preds = _index_images(Path(pred_dir))
    gts = _index_images(Path(gt_dir))
    trimaps = _index_images(Path(trimap_dir))
    result = MattingEval(scores={}, means=None)
    for image_id in sorted(gts.keys() | preds.keys()):
        missing = [name for name, d in (("prediction", preds), ("ground truth", gts), ("trimap", trimaps))
                   if image_id not in d]
        if missing:
            result.failures[image_id] = "missing " + ", ".join(missing)
            continue
        try:
            result.scores[image_id] = evaluate_matting(
                read_alpha(preds[image_id]), read_alpha(gts[image_id]),
                _read_trimap(trimaps[image_id]), **metric_kwargs)
        except (OSError, ValueError) as exc:
            result.failures[image_id] = f"{type(exc).__name__}: {exc}"
    if result.scores:
        result.means = _mean_score(result.scores.values())
    return result


def read_score_table(path) -> list:
    """Rows of a ``image_id,rater_id,method,score`` CSV as tuples."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = {"image_id", "rater_id", "method", "score"}
        if reader.fieldnames is None or not expected <= set(reader.fieldnames):
            raise ValueError(f"{path}: header must contain {', '.join(sorted(expected))}")
        for lineno, row in enumerate(reader, start=2):
            try:
                score = float(row["score"])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: score {row['score']!r} is not a number") from None
            rows.append((row["image_id"], row["rater_id"], row["method"], score))
    return rows


def eval_mos(path) -> dict:
    return mos_aggregate(read_score_table(path))
