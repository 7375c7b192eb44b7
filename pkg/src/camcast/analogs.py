"""Analog-retrieval baselines: nearest archived image or image run.

Given a forecast descriptor, the per-image baseline returns the archived
frame whose (normalized) descriptor is nearest in Euclidean distance; the
sequence baseline slides a window over gapless archive runs and returns the
run whose concatenated descriptors are nearest to the whole forecast. Ties
break toward the earliest timestamp.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from datetime import timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from .archive import FrameRef
from .descriptors import (
    NormalizerMismatchError,
    WeatherDescriptor,
    format_utc,
    parse_utc,
)
from .fields import DESCRIPTOR_DIM

log = logging.getLogger(__name__)

ARCHIVE_META_FORMAT = "camcast-analog-archive"


class NoGaplessRunError(LookupError):
    """The archive has no gapless run long enough for the requested sequence."""

    def __init__(self, needed: int, longest: int):
        super().__init__(
            f"no gapless run of {needed} frames; longest available run has {longest}"
        )
        self.needed = needed
        self.longest = longest


@dataclass
class AnalogArchive:
    """Time-sorted (frame, normalized descriptor) table for nearest-neighbor queries."""

    frames: list[FrameRef]
    vectors: np.ndarray  # (n, descriptor_dim)
    normalizer_id: str

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.frames):
            raise ValueError("descriptor table must have one row per frame")
        times = [frame.timestamp for frame in self.frames]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("archive entries must be strictly time-sorted")

    def __len__(self) -> int:
        return len(self.frames)


def build_archive(
    pairs: Sequence[tuple[FrameRef, WeatherDescriptor]],
    normalizer_id: str,
) -> AnalogArchive:
    """Assemble an archive from already-normalized (frame, descriptor) pairs."""
    if not pairs:
        raise ValueError("analog archive must be nonempty")
    ordered = sorted(pairs, key=lambda p: p[0].timestamp)
    for _, descriptor in ordered:
        if descriptor.normalized_with != normalizer_id:
            raise NormalizerMismatchError(
                f"archive descriptors must be normalized with {normalizer_id!r}"
            )
    return AnalogArchive(
        frames=[frame for frame, _ in ordered],
        vectors=np.stack([d.vector for _, d in ordered]),
        normalizer_id=normalizer_id,
    )


def _check_query(archive: AnalogArchive, descriptor: WeatherDescriptor) -> None:
    if descriptor.normalized_with != archive.normalizer_id:
        raise NormalizerMismatchError(
            f"query normalized with {descriptor.normalized_with!r}, "
            f"archive expects {archive.normalizer_id!r}"
        )


def retrieve_individual(archive: AnalogArchive, forecast: WeatherDescriptor) -> FrameRef:
    """Archived frame with the smallest Euclidean descriptor distance."""
    if len(archive) == 0:
        raise ValueError("analog archive is empty")
    _check_query(archive, forecast)
    distances = np.einsum("ij,ij->i", archive.vectors - forecast.vector,
                          archive.vectors - forecast.vector)
    # argmin returns the first (earliest) index on ties.
    return archive.frames[int(np.argmin(distances))]


def gapless_runs(archive: AnalogArchive, cadence_minutes: int) -> list[tuple[int, int]]:
    """Maximal [start, end) index ranges advancing exactly one cadence per frame."""
    step = timedelta(minutes=cadence_minutes)
    runs: list[tuple[int, int]] = []
    start = 0
    for i in range(1, len(archive) + 1):
        if i == len(archive) or archive.frames[i].timestamp - archive.frames[i - 1].timestamp != step:
            runs.append((start, i))
            start = i
    return runs


def retrieve_sequence(
    archive: AnalogArchive,
    forecast: Sequence[WeatherDescriptor],
    cadence_minutes: int,
) -> list[FrameRef]:
    """Archived gapless run nearest to the whole forecast descriptor sequence.

    Distance is the Euclidean norm of the concatenated per-lead differences;
    candidate windows never span archive gaps.
    """
    length = len(forecast)
    if length == 0:
        raise ValueError("forecast sequence must be nonempty")
    for descriptor in forecast:
        _check_query(archive, descriptor)
    query = np.stack([d.vector for d in forecast])  # (L, dim)

    best_start: int | None = None
    best_distance = np.inf
    longest = 0
    for run_start, run_end in gapless_runs(archive, cadence_minutes):
        run_length = run_end - run_start
        longest = max(longest, run_length)
        if run_length < length:
            continue
        block = archive.vectors[run_start:run_end]
        # per_lead[i, k] = squared distance of frame (run_start + i) to forecast k
        diff = block[:, None, :] - query[None, :, :]
        per_lead = np.einsum("ikj,ikj->ik", diff, diff)
        n_windows = run_length - length + 1
        window = np.zeros(n_windows)
        for k in range(length):
            window += per_lead[k : k + n_windows, k]
        local_best = int(np.argmin(window))
        if window[local_best] < best_distance:
            best_distance = float(window[local_best])
            best_start = run_start + local_best
    if best_start is None:
        raise NoGaplessRunError(needed=length, longest=longest)
    return archive.frames[best_start : best_start + length]


# ---------------------------------------------------------------------------
# Persistence: CSV descriptor table + JSON metadata sidecar
# ---------------------------------------------------------------------------

def save_archive(archive: AnalogArchive, path: Path | str) -> None:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["site_id", "timestamp", "path", *[f"v{i:02d}" for i in range(DESCRIPTOR_DIM)]]
        )
        for frame, vector in zip(archive.frames, archive.vectors):
            writer.writerow(
                [frame.site_id, format_utc(frame.timestamp), str(frame.path)]
                + [repr(float(x)) for x in vector]
            )
    meta = {"format": ARCHIVE_META_FORMAT, "version": 1, "normalizer_id": archive.normalizer_id}
    path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(meta, indent=2))


def load_archive(path: Path | str) -> AnalogArchive:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".meta.json").read_text())
    if meta.get("format") != ARCHIVE_META_FORMAT:
        raise ValueError(f"{path}: not an analog archive")
    frames: list[FrameRef] = []
    rows: list[list[float]] = []
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        vector_cols = len(header) - 3
        for row in reader:
            frames.append(
                FrameRef(site_id=row[0], timestamp=parse_utc(row[1]), path=Path(row[2]))
            )
            rows.append([float(x) for x in row[3 : 3 + vector_cols]])
    return AnalogArchive(
        frames=frames, vectors=np.array(rows), normalizer_id=meta["normalizer_id"]
    )
