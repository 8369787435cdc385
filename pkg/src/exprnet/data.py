"""Frame manifests: annotation parsing, image/label reconciliation,
train/val splitting, class rebalancing, and class weights.

Label order is Neutral(0), Anger(1), Disgust(2), Fear(3), Happiness(4),
Sadness(5), Surprise(6). A label of -1 marks an unusable frame and never
survives reconciliation.
"""

from __future__ import annotations

import csv
import os
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

NUM_CLASSES = 7
CLASS_NAMES = ("Neutral", "Anger", "Disgust", "Fear", "Happiness", "Sadness", "Surprise")

# Original -> sampled per-class ratios that reproduce the rebalanced
# training-set populations exactly under round-half-up.
DEFAULT_SAMPLING_RATIOS = (
    Fraction(1, 5), Fraction(7, 4), Fraction(21, 8), Fraction(3),
    Fraction(1, 4), Fraction(1, 3), Fraction(1),
)

IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png", ".bmp")
_FRAME_RE = re.compile(r"^0*(\d+)$")


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class FrameRecord:
    path: str
    video_id: str
    frame_index: int
    label: int
    duplicate_ordinal: int = 0


Manifest = list  # list[FrameRecord]; plain list keeps ordering semantics obvious


@dataclass
class ClassDistribution:
    counts: tuple

    def __post_init__(self):
        if len(self.counts) != NUM_CLASSES or any(c < 0 for c in self.counts):
            raise DataError(f"need {NUM_CLASSES} nonnegative counts, got {self.counts}")

    @property
    def total(self) -> int:
        return sum(self.counts)

    @classmethod
    def of(cls, manifest: Sequence[FrameRecord]) -> "ClassDistribution":
        counts = [0] * NUM_CLASSES
        for rec in manifest:
            counts[rec.label] += 1
        return cls(tuple(counts))


@dataclass
class SamplerConfig:
    ratios: tuple = DEFAULT_SAMPLING_RATIOS
    seed: int = 0

    def __post_init__(self):
        if len(self.ratios) != NUM_CLASSES:
            raise DataError(f"need {NUM_CLASSES} ratios")
        if any(Fraction(r) <= 0 for r in self.ratios):
            raise DataError("sampling ratios must be positive")


@dataclass
class ReconcileReport:
    kept: int = 0
    dropped_missing_image: int = 0
    dropped_missing_label: int = 0
    dropped_invalid_label: int = 0
    skipped_unparseable: int = 0

    def as_text(self) -> str:
        lines = ["reconcile report:"]
        for key, value in self.as_dict().items():
            lines.append(f"  {key} = {value}")
        return "\n".join(lines)

    def as_dict(self) -> dict[str, int]:
        return {
            "kept": self.kept,
            "dropped_missing_image": self.dropped_missing_image,
            "dropped_missing_label": self.dropped_missing_label,
            "dropped_invalid_label": self.dropped_invalid_label,
            "skipped_unparseable": self.skipped_unparseable,
        }

    def __iadd__(self, other: "ReconcileReport"):
        self.kept += other.kept
        self.dropped_missing_image += other.dropped_missing_image
        self.dropped_missing_label += other.dropped_missing_label
        self.dropped_invalid_label += other.dropped_invalid_label
        self.skipped_unparseable += other.skipped_unparseable
        return self


def parse_annotation_file(path) -> list[int]:
    """One label per line, in {-1, 0..6}; an optional header line of
    comma-separated class names is skipped. Line i maps to frame index i
    (frames are numbered from 1)."""
    labels: list[int] = []
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    start = 0
    if lines and "," in lines[0]:
        start = 1
    for lineno, raw in enumerate(lines[start:], start=start + 1):
        text = raw.strip()
        if not text and lineno == len(lines):
            break  # trailing blank line
        try:
            value = int(text)
        except ValueError:
            raise DataError(f"{path}:{lineno}: unparseable label {raw!r}")
        if value < -1 or value > 6:
            raise DataError(f"{path}:{lineno}: label {value} outside [-1, 6]")
        labels.append(value)
    return labels


def _scan_frames(image_dir) -> tuple[list[tuple[int, str]], int]:
    """(frame_index, path) pairs sorted by index, plus unparseable-name count."""
    frames = []
    skipped = 0
    for entry in sorted(os.listdir(image_dir)):
        stem, ext = os.path.splitext(entry)
        if ext.lower() not in IMAGE_EXTENSIONS:
            continue
        m = _FRAME_RE.match(stem)
        if not m:
            skipped += 1
            continue
        frames.append((int(m.group(1)), os.path.join(image_dir, entry)))
    frames.sort()
    return frames, skipped


def reconcile(image_dir, labels: Sequence[int], video_id: str | None = None
              ) -> tuple[Manifest, ReconcileReport]:
    """Keep frames that have both an image file and a valid (!= -1) label.

    Frame files are named as zero-padded 1-based integers; label list
    position i-1 annotates frame i. Count mismatches between the two sides
    are tolerated and reported, never fatal.
    """
    if video_id is None:
        video_id = os.path.basename(os.path.normpath(image_dir))
    frames, skipped = _scan_frames(image_dir)
    report = ReconcileReport(skipped_unparseable=skipped)
    present = {idx for idx, _ in frames}
    manifest: Manifest = []
    for idx, path in frames:
        if idx < 1 or idx > len(labels):
            report.dropped_missing_label += 1
            continue
        label = labels[idx - 1]
        if label == -1:
            report.dropped_invalid_label += 1
            continue
        manifest.append(FrameRecord(path=path, video_id=video_id, frame_index=idx, label=label))
    report.kept = len(manifest)
    report.dropped_missing_image = sum(
        1 for i, lab in enumerate(labels, start=1) if i not in present and lab != -1)
    return manifest, report


def split_train_val(manifest: Manifest, fraction: float, seed: int,
                    granularity: str = "video") -> tuple[Manifest, Manifest]:
    """Deterministic seeded split; first side targets `fraction` of frames.

    video granularity keeps whole videos together and fills the train side
    greedily in seeded order until it reaches the target frame count; frame
    granularity splits records independently with exact counts.
    """
    if not 0 < fraction < 1:
        raise DataError("fraction must be in (0, 1)")
    if granularity not in ("video", "frame"):
        raise DataError(f"unknown granularity {granularity!r}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 17]))
    if granularity == "frame":
        order = rng.permutation(len(manifest))
        n_train = round(len(manifest) * fraction)
        train_idx = set(order[:n_train].tolist())
        train = [r for i, r in enumerate(manifest) if i in train_idx]
        val = [r for i, r in enumerate(manifest) if i not in train_idx]
        return train, val

    videos = sorted({r.video_id for r in manifest})
    if len(videos) < 2:
        raise DataError("cannot split a single video at video granularity")
    sizes = {v: 0 for v in videos}
    for r in manifest:
        sizes[r.video_id] += 1
    order = [videos[i] for i in rng.permutation(len(videos))]
    target = fraction * len(manifest)
    train_videos: set[str] = set()
    assigned = 0
    for v in order:
        if assigned < target and len(train_videos) < len(videos) - 1:
            train_videos.add(v)
            assigned += sizes[v]
    if not train_videos:
        train_videos.add(order[0])
    train = [r for r in manifest if r.video_id in train_videos]
    val = [r for r in manifest if r.video_id not in train_videos]
    return train, val


def round_half_up(x: Fraction) -> int:
    return int((x + Fraction(1, 2)).__floor__())


def resample(manifest: Manifest, config: SamplerConfig) -> Manifest:
    """Rebalance classes to target counts round_half_up(n_c * ratio_c).

    ratio <= 1 keeps a seeded subset without duplicates; ratio > 1 includes
    floor(t/n) full copies of every record plus a seeded prefix for the
    remainder, so multiplicities differ by at most one. Output order is a
    seeded global shuffle.
    """
    by_class: dict[int, list[FrameRecord]] = {c: [] for c in range(NUM_CLASSES)}
    for rec in manifest:
        by_class[rec.label].append(rec)
    out: Manifest = []
    for c in range(NUM_CLASSES):
        ratio = Fraction(config.ratios[c])
        records = by_class[c]
        n = len(records)
        if ratio == 1:
            chosen = list(records)
        else:
            if n == 0:
                raise DataError(f"class {c} is empty but has ratio {ratio}")
            target = round_half_up(n * ratio)
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1, c]))
            order = rng.permutation(n)
            if ratio <= 1:
                chosen = [records[i] for i in order[:target]]
            else:
                full, rem = divmod(target, n)
                chosen = list(records) * full
                chosen += [records[i] for i in order[:rem]]
        counts: dict[tuple[str, int], int] = {}
        for rec in chosen:
            key = (rec.video_id, rec.frame_index)
            ordinal = counts.get(key, 0)
            counts[key] = ordinal + 1
            out.append(FrameRecord(rec.path, rec.video_id, rec.frame_index, rec.label, ordinal))
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
    return [out[i] for i in rng.permutation(len(out))]


def compute_class_weights(dist: ClassDistribution) -> np.ndarray:
    """Inverse-frequency weights w_c = total / (K * n_c); balanced counts give 1.0."""
    counts = np.asarray(dist.counts, dtype=np.float64)
    if np.any(counts < 1):
        raise DataError(f"cannot weight a class with zero samples: {dist.counts}")
    return dist.total / (NUM_CLASSES * counts)


MANIFEST_HEADER = ["path", "label", "video_id", "frame_index", "duplicate_ordinal"]


def write_manifest(manifest: Manifest, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(MANIFEST_HEADER)
        for rec in manifest:
            writer.writerow([rec.path, rec.label, rec.video_id, rec.frame_index, rec.duplicate_ordinal])


def read_manifest(path) -> Manifest:
    manifest: Manifest = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise DataError(f"{path}: bad manifest header {header}")
        for rowno, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise DataError(f"{path}:{rowno}: expected 5 columns, got {len(row)}")
            try:
                label = int(row[1])
                frame_index = int(row[3])
                ordinal = int(row[4])
            except ValueError as exc:
                raise DataError(f"{path}:{rowno}: {exc}")
            if not 0 <= label < NUM_CLASSES:
                raise DataError(f"{path}:{rowno}: label {label} outside [0, {NUM_CLASSES})")
            manifest.append(FrameRecord(row[0], row[2], frame_index, label, ordinal))
    return manifest
