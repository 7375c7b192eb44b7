"""Camera image archive: indexing, preprocessing, and training-tuple enumeration.

Frames live on a 10-minute grid. Preprocessing downscales by exact area
averaging to the training resolution and maps intensities linearly from
[0, 255] to [-1, 1]. Tuple enumeration pairs every present frame with every
future frame up to the maximum lead time, attaching interpolated weather
descriptors; pairs that would span an archive gap are simply absent.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from PIL import Image

from .descriptors import (
    CoverageError,
    DescriptorNormalizer,
    DescriptorSeries,
    WeatherDescriptor,
    ensure_utc,
    format_utc,
    parse_utc,
)
from .resample import area_resize

log = logging.getLogger(__name__)

GRID_MINUTES = 10
MAX_LEAD_MINUTES = 360
TRAIN_HEIGHT = 64
TRAIN_WIDTH = 128

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg"}


class ArchiveError(ValueError):
    """The archive layout or a frame violates the indexing contract."""


class DuplicateFrameError(ArchiveError):
    """Two files claim the same (site, timestamp) slot."""


@dataclass(frozen=True)
class FrameRef:
    """One archived camera frame on the 10-minute grid."""

    site_id: str
    timestamp: datetime
    path: Path

    def __post_init__(self) -> None:
        object.__setattr__(self, "timestamp", ensure_utc(self.timestamp))
        object.__setattr__(self, "path", Path(self.path))


@dataclass(frozen=True)
class Gap:
    """A run of missing grid slots between two archived frames."""

    after: datetime
    before: datetime
    missing: int

    def missing_times(self) -> Iterator[datetime]:
        for k in range(1, self.missing + 1):
            yield self.after + timedelta(minutes=GRID_MINUTES * k)


@dataclass
class ArchiveIndex:
    """Result of indexing one site's archive directory."""

    site_id: str
    frames: list[FrameRef] = field(default_factory=list)
    gaps: list[Gap] = field(default_factory=list)
    rejected_offgrid: list[Path] = field(default_factory=list)
    unparseable: list[Path] = field(default_factory=list)
    excluded: list[FrameRef] = field(default_factory=list)

    def frame_at(self, timestamp: datetime) -> FrameRef | None:
        timestamp = ensure_utc(timestamp)
        for frame in self.frames:
            if frame.timestamp == timestamp:
                return frame
        return None


def _on_grid(timestamp: datetime) -> bool:
    return (
        timestamp.minute % GRID_MINUTES == 0
        and timestamp.second == 0
        and timestamp.microsecond == 0
    )


def parse_frame_filename(name: str, site_id: str) -> datetime | None:
    """Timestamp from ``<site>_<timestamp>.<ext>``; None if not this site's frame."""
    stem = Path(name).stem
    prefix = f"{site_id}_"
    if not stem.startswith(prefix):
        return None
    try:
        return parse_utc(stem[len(prefix):])
    except ValueError:
        raise ArchiveError(f"unparseable frame timestamp in {name!r}")


def load_exclusions(path: Path | str) -> set[datetime]:
    """Exclusion list: plain text, one timestamp per line, # comments allowed."""
    excluded: set[datetime] = set()
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            excluded.add(parse_utc(line))
    return excluded


def index_archive(
    root: Path | str,
    site_id: str,
    exclusions: set[datetime] | None = None,
) -> ArchiveIndex:
    """Index a directory of frames named ``<site>_<timestamp>.<ext>``.

    Frames are sorted by timestamp. Off-grid timestamps are rejected into a
    report, duplicate timestamps are an error, files with unparseable names
    are skipped with a warning, and excluded timestamps are dropped.
    """
    root = Path(root)
    if not root.is_dir():
        raise ArchiveError(f"archive root is not a directory: {root}")
    exclusions = exclusions or set()
    index = ArchiveIndex(site_id=site_id)
    by_time: dict[datetime, FrameRef] = {}
    for entry in sorted(root.iterdir()):
        if not entry.is_file() or entry.suffix.lower() not in IMAGE_EXTENSIONS:
            continue
        try:
            timestamp = parse_frame_filename(entry.name, site_id)
        except ArchiveError:
            log.warning("skipping frame with unparseable name: %s", entry)
            index.unparseable.append(entry)
            continue
        if timestamp is None:
            continue
        ref = FrameRef(site_id=site_id, timestamp=timestamp, path=entry)
        if not _on_grid(timestamp):
            index.rejected_offgrid.append(entry)
            continue
        if timestamp in by_time:
            raise DuplicateFrameError(
                f"duplicate frame at {format_utc(timestamp)}: {by_time[timestamp].path} and {entry}"
            )
        by_time[timestamp] = ref
        if timestamp in exclusions:
            index.excluded.append(ref)
    for ref in index.excluded:
        by_time.pop(ref.timestamp, None)
    index.frames = [by_time[ts] for ts in sorted(by_time)]
    step = timedelta(minutes=GRID_MINUTES)
    for prev, cur in zip(index.frames, index.frames[1:]):
        delta = cur.timestamp - prev.timestamp
        slots = int(delta / step) - 1
        if slots > 0:
            index.gaps.append(Gap(after=prev.timestamp, before=cur.timestamp, missing=slots))
    if index.rejected_offgrid:
        log.warning(
            "%s: rejected %d off-grid frame(s)", root, len(index.rejected_offgrid)
        )
    return index


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------

def preprocess_image(
    raw: np.ndarray | Image.Image,
    target_h: int = TRAIN_HEIGHT,
    target_w: int = TRAIN_WIDTH,
) -> np.ndarray:
    """Area-downsample a decoded RGB image and map intensities to [-1, 1]."""
    if isinstance(raw, Image.Image):
        raw = np.asarray(raw.convert("RGB"))
    raw = np.asarray(raw)
    if raw.ndim != 3 or raw.shape[2] != 3:
        raise ArchiveError(f"expected an (H, W, 3) RGB image, got shape {raw.shape}")
    if raw.shape[0] < target_h or raw.shape[1] < target_w:
        raise ArchiveError(
            f"image {raw.shape[0]}x{raw.shape[1]} smaller than target {target_h}x{target_w}"
        )
    small = area_resize(raw.astype(np.float64), target_h, target_w)
    return (small / 127.5 - 1.0).astype(np.float32)


def load_frame(
    ref: FrameRef, target_h: int = TRAIN_HEIGHT, target_w: int = TRAIN_WIDTH
) -> np.ndarray:
    """Decode and preprocess one archived frame."""
    try:
        with Image.open(ref.path) as img:
            decoded = np.asarray(img.convert("RGB"))
    except Exception as err:
        raise ArchiveError(f"cannot decode frame {ref.path}: {err}") from err
    return preprocess_image(decoded, target_h, target_w)


# ---------------------------------------------------------------------------
# Tuple enumeration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleRef:
    """A (present, future) frame pairing with attached descriptors."""

    present: FrameRef
    future: FrameRef
    present_descriptor: WeatherDescriptor
    future_descriptor: WeatherDescriptor
    lead_minutes: int

    def __post_init__(self) -> None:
        if self.lead_minutes < 0 or self.lead_minutes % GRID_MINUTES:
            raise ValueError(f"lead must be a non-negative multiple of {GRID_MINUTES} min")
        span = self.future.timestamp - self.present.timestamp
        if span != timedelta(minutes=self.lead_minutes):
            raise ValueError(
                f"frame spacing {span} does not match lead {self.lead_minutes} min"
            )


@dataclass
class SampleTuple:
    """A materialized training/evaluation example."""

    present_image: np.ndarray
    present_descriptor: WeatherDescriptor
    future_image: np.ndarray
    future_descriptor: WeatherDescriptor
    lead_minutes: int


@dataclass
class EnumerationStats:
    yielded: int = 0
    skipped_no_descriptor: int = 0


def enumerate_tuples(
    frames: Sequence[FrameRef],
    descriptors: DescriptorSeries,
    max_lead_minutes: int = MAX_LEAD_MINUTES,
    step_minutes: int = GRID_MINUTES,
    stats: EnumerationStats | None = None,
) -> Iterator[SampleRef]:
    """Yield every (present, future) pairing available in the archive.

    Leads run from 0 to ``max_lead_minutes`` in ``step_minutes`` increments;
    pairs spanning archive gaps are silently absent. Descriptor coverage
    holes skip the affected pair with a counted warning.
    """
    if max_lead_minutes < 0 or step_minutes <= 0 or step_minutes % GRID_MINUTES:
        raise ValueError("lead range must be non-negative with a positive 10-min-multiple step")
    stats = stats if stats is not None else EnumerationStats()
    by_time = {frame.timestamp: frame for frame in frames}
    descriptor_cache: dict[datetime, WeatherDescriptor] = {}

    def descriptor_at(moment: datetime) -> WeatherDescriptor:
        found = descriptor_cache.get(moment)
        if found is None:
            found = descriptors.at(moment)
            descriptor_cache[moment] = found
        return found

    for present in sorted(frames, key=lambda f: f.timestamp):
        for lead in range(0, max_lead_minutes + 1, step_minutes):
            future = by_time.get(present.timestamp + timedelta(minutes=lead))
            if future is None:
                continue
            try:
                w_present = descriptor_at(present.timestamp)
                w_future = descriptor_at(future.timestamp)
            except CoverageError as err:
                stats.skipped_no_descriptor += 1
                log.warning("skipping pair at %s (+%d min): %s",
                            format_utc(present.timestamp), lead, err)
                continue
            stats.yielded += 1
            yield SampleRef(
                present=present,
                future=future,
                present_descriptor=w_present,
                future_descriptor=w_future,
                lead_minutes=lead,
            )


def split_by_year(
    refs: Iterable[SampleRef],
    train_years: set[int],
    test_years: set[int],
) -> tuple[list[SampleRef], list[SampleRef]]:
    """Assign pairs to train/test by the present frame's year.

    Pairs whose present and future frames fall into different splits (or out
    of both) are dropped.
    """
    if train_years & test_years:
        raise ValueError(f"train/test years overlap: {sorted(train_years & test_years)}")

    def split_of(year: int) -> str | None:
        if year in train_years:
            return "train"
        if year in test_years:
            return "test"
        return None

    train: list[SampleRef] = []
    test: list[SampleRef] = []
    for ref in refs:
        a = split_of(ref.present.timestamp.year)
        b = split_of(ref.future.timestamp.year)
        if a is None or a != b:
            continue
        (train if a == "train" else test).append(ref)
    return train, test


def load_tuple(
    ref: SampleRef,
    target_h: int = TRAIN_HEIGHT,
    target_w: int = TRAIN_WIDTH,
    normalizer: DescriptorNormalizer | None = None,
) -> SampleTuple:
    """Materialize a pairing: decode both frames, optionally normalize descriptors."""
    w_present = ref.present_descriptor
    w_future = ref.future_descriptor
    if normalizer is not None:
        w_present = normalizer.normalize(w_present)
        w_future = normalizer.normalize(w_future)
    return SampleTuple(
        present_image=load_frame(ref.present, target_h, target_w),
        present_descriptor=w_present,
        future_image=load_frame(ref.future, target_h, target_w),
        future_descriptor=w_future,
        lead_minutes=ref.lead_minutes,
    )


# ---------------------------------------------------------------------------
# Dataset manifest
# ---------------------------------------------------------------------------

def write_manifest(refs: Iterable[SampleRef], path: Path | str) -> int:
    """Write a reproducible (t0, t, lead_minutes) manifest CSV."""
    count = 0
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t0", "t", "lead_minutes"])
        for ref in refs:
            writer.writerow(
                [format_utc(ref.present.timestamp), format_utc(ref.future.timestamp), ref.lead_minutes]
            )
            count += 1
    return count


def read_manifest(path: Path | str) -> list[tuple[datetime, datetime, int]]:
    rows: list[tuple[datetime, datetime, int]] = []
    with Path(path).open(newline="") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            rows.append((parse_utc(row["t0"]), parse_utc(row["t"]), int(row["lead_minutes"])))
    return rows


def resolve_manifest(
    rows: Sequence[tuple[datetime, datetime, int]],
    index: ArchiveIndex,
    descriptors: DescriptorSeries,
) -> list[SampleRef]:
    """Rebuild SampleRefs from a manifest against an indexed archive."""
    by_time = {frame.timestamp: frame for frame in index.frames}
    refs: list[SampleRef] = []
    for t0, t, lead in rows:
        present = by_time.get(ensure_utc(t0))
        future = by_time.get(ensure_utc(t))
        if present is None or future is None:
            raise ArchiveError(f"manifest row ({format_utc(t0)}, {format_utc(t)}) not in archive")
        refs.append(
            SampleRef(
                present=present,
                future=future,
                present_descriptor=descriptors.at(present.timestamp),
                future_descriptor=descriptors.at(future.timestamp),
                lead_minutes=lead,
            )
        )
    return refs
