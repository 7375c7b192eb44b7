"""Weather descriptors: construction, temporal alignment, normalization, tiling.

A descriptor is a fixed-order vector of 31 floats: sine/cosine encodings of
the time of day and the day of year, followed by 27 COSMO-1 surface fields
in canonical order. Hourly NWP records are linearly interpolated to the
10-minute camera cadence; the cyclic encodings are always recomputed exactly
from the query time rather than interpolated.
"""

from __future__ import annotations

import calendar
import csv
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .fields import DESCRIPTOR_DIM, FIELD_ORDER, N_CYCLIC

log = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400.0
_TWO_PI = 2.0 * math.pi
# Relative floor below which a per-element standard deviation is treated as
# zero variance (guards against float residue on constant inputs).
_ZERO_STD_REL_TOL = 1e-12

NORMALIZER_FORMAT = "camcast-normalizer"


class IngestionError(ValueError):
    """A record or CSV row is unusable (missing field, bad value, duplicate)."""


class AlignmentError(ValueError):
    """Timestamps do not line up the way an operation requires."""


class CoverageError(LookupError):
    """The descriptor series has no records bracketing the requested time."""


class NormalizerMismatchError(ValueError):
    """Descriptors were normalized with a different normalizer than required."""


# ---------------------------------------------------------------------------
# Time handling
# ---------------------------------------------------------------------------

def ensure_utc(moment: datetime) -> datetime:
    """Coerce a datetime to timezone-aware UTC (naive input is taken as UTC)."""
    if moment.tzinfo is None:
        return moment.replace(tzinfo=timezone.utc)
    return moment.astimezone(timezone.utc)


def parse_utc(text: str) -> datetime:
    """Parse an ISO-8601 timestamp ('Z' suffix and compact form accepted)."""
    raw = text.strip()
    candidate = raw[:-1] + "+00:00" if raw.endswith(("Z", "z")) else raw
    try:
        return ensure_utc(datetime.fromisoformat(candidate))
    except ValueError:
        pass
    for fmt in ("%Y%m%dT%H%M%SZ", "%Y%m%dT%H%M%S"):
        try:
            return datetime.strptime(raw, fmt).replace(tzinfo=timezone.utc)
        except ValueError:
            continue
    raise ValueError(f"unrecognized UTC timestamp: {text!r}")


def format_utc(moment: datetime) -> str:
    return ensure_utc(moment).strftime("%Y-%m-%dT%H:%M:%SZ")


def format_utc_compact(moment: datetime) -> str:
    """Filesystem-safe timestamp form used in frame and export filenames."""
    return ensure_utc(moment).strftime("%Y%m%dT%H%M%SZ")


def time_of_day_encoding(moment: datetime) -> tuple[float, float]:
    moment = ensure_utc(moment)
    seconds = (
        moment.hour * 3600
        + moment.minute * 60
        + moment.second
        + moment.microsecond / 1e6
    )
    fraction = seconds / SECONDS_PER_DAY
    return math.sin(_TWO_PI * fraction), math.cos(_TWO_PI * fraction)


def day_of_year_encoding(moment: datetime) -> tuple[float, float]:
    moment = ensure_utc(moment)
    days_in_year = 366 if calendar.isleap(moment.year) else 365
    fraction = (moment.timetuple().tm_yday - 1) / days_in_year
    return math.sin(_TWO_PI * fraction), math.cos(_TWO_PI * fraction)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NwpRecord:
    """One hourly NWP output row at a camera site.

    ``values`` must contain exactly the canonical field abbreviations with
    finite values; rows with gaps are rejected at ingestion.
    """

    timestamp: datetime
    site_id: str
    values: Mapping[str, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "timestamp", ensure_utc(self.timestamp))
        ts = self.timestamp
        if ts.minute or ts.second or ts.microsecond:
            raise AlignmentError(f"NWP record timestamp not on the hour: {ts}")
        missing = [abbr for abbr in FIELD_ORDER if abbr not in self.values]
        if missing:
            raise IngestionError(f"NWP record missing field(s): {', '.join(missing)}")
        extra = sorted(set(self.values) - set(FIELD_ORDER))
        if extra:
            raise IngestionError(f"NWP record has unknown field(s): {', '.join(extra)}")
        for abbr in FIELD_ORDER:
            value = self.values[abbr]
            if not math.isfinite(value):
                raise IngestionError(f"NWP record field {abbr} is not finite: {value}")


@dataclass(frozen=True, eq=False)
class WeatherDescriptor:
    """Fixed-order conditioning vector with the time it is valid for.

    ``normalized_with`` is None for raw descriptors and carries the fitting
    dataset id once a normalizer has been applied.
    """

    vector: np.ndarray
    valid_time: datetime
    normalized_with: str | None = None

    def __post_init__(self) -> None:
        vec = np.array(self.vector, dtype=np.float64)
        if vec.shape != (DESCRIPTOR_DIM,):
            raise ValueError(f"descriptor vector must have shape ({DESCRIPTOR_DIM},), got {vec.shape}")
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)
        object.__setattr__(self, "valid_time", ensure_utc(self.valid_time))


def build_descriptor(record: NwpRecord, valid_time: datetime) -> WeatherDescriptor:
    """Assemble a descriptor from an hourly record.

    The record must carry the hour that ``valid_time`` falls into (i.e. the
    query time truncated to the hour).
    """
    valid_time = ensure_utc(valid_time)
    hour = valid_time.replace(minute=0, second=0, microsecond=0)
    if record.timestamp != hour:
        raise AlignmentError(
            f"record at {format_utc(record.timestamp)} does not cover {format_utc(valid_time)}"
        )
    vector = np.empty(DESCRIPTOR_DIM, dtype=np.float64)
    vector[0:2] = time_of_day_encoding(valid_time)
    vector[2:4] = day_of_year_encoding(valid_time)
    for i, abbr in enumerate(FIELD_ORDER):
        vector[N_CYCLIC + i] = record.values[abbr]
    return WeatherDescriptor(vector=vector, valid_time=valid_time)


def interpolate_descriptor(
    before: WeatherDescriptor,
    after: WeatherDescriptor,
    valid_time: datetime,
) -> WeatherDescriptor:
    """Linearly interpolate the NWP elements between two hourly descriptors.

    The cyclic time encodings are recomputed exactly for ``valid_time``; only
    the field elements are interpolated. Querying an endpoint reproduces that
    endpoint's field elements bit-exactly.
    """
    if before.normalized_with != after.normalized_with:
        raise NormalizerMismatchError("cannot interpolate descriptors with different normalizations")
    valid_time = ensure_utc(valid_time)
    span = after.valid_time - before.valid_time
    if span != timedelta(hours=1):
        raise AlignmentError(f"interpolation endpoints must be one hour apart, got {span}")
    if not (before.valid_time <= valid_time <= after.valid_time):
        raise ValueError(
            f"{format_utc(valid_time)} outside interpolation range "
            f"[{format_utc(before.valid_time)}, {format_utc(after.valid_time)}]"
        )
    alpha = (valid_time - before.valid_time) / span
    vector = np.empty(DESCRIPTOR_DIM, dtype=np.float64)
    vector[0:2] = time_of_day_encoding(valid_time)
    vector[2:4] = day_of_year_encoding(valid_time)
    vector[N_CYCLIC:] = (1.0 - alpha) * before.vector[N_CYCLIC:] + alpha * after.vector[N_CYCLIC:]
    return WeatherDescriptor(
        vector=vector, valid_time=valid_time, normalized_with=before.normalized_with
    )


class DescriptorSeries:
    """Hourly descriptor source with interpolation to arbitrary query times."""

    def __init__(self, records: Iterable[NwpRecord], site_id: str | None = None):
        self._by_hour: dict[datetime, NwpRecord] = {}
        self.site_id = site_id
        for record in records:
            if site_id is not None and record.site_id != site_id:
                continue
            if record.timestamp in self._by_hour:
                raise IngestionError(f"duplicate NWP record at {format_utc(record.timestamp)}")
            self._by_hour[record.timestamp] = record
        self._hours = sorted(self._by_hour)

    def __len__(self) -> int:
        return len(self._hours)

    @property
    def start(self) -> datetime:
        if not self._hours:
            raise CoverageError("descriptor series is empty")
        return self._hours[0]

    @property
    def end(self) -> datetime:
        if not self._hours:
            raise CoverageError("descriptor series is empty")
        return self._hours[-1]

    def at(self, valid_time: datetime) -> WeatherDescriptor:
        """Descriptor for an arbitrary time inside the covered period."""
        valid_time = ensure_utc(valid_time)
        floor = valid_time.replace(minute=0, second=0, microsecond=0)
        if valid_time == floor:
            record = self._by_hour.get(floor)
            if record is None:
                raise CoverageError(f"no NWP record at {format_utc(floor)}")
            return build_descriptor(record, valid_time)
        ceil = floor + timedelta(hours=1)
        before = self._by_hour.get(floor)
        after = self._by_hour.get(ceil)
        if before is None or after is None:
            raise CoverageError(
                f"no NWP records bracketing {format_utc(valid_time)} "
                f"(need {format_utc(floor)} and {format_utc(ceil)})"
            )
        return interpolate_descriptor(
            build_descriptor(before, floor),
            build_descriptor(after, ceil),
            valid_time,
        )


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DescriptorNormalizer:
    """Per-element standardization fitted on a training set.

    Cyclic encoding elements pass through unchanged (mean 0, std 1 by
    convention); zero-variance elements get std 1 so normalization stays
    finite and invertible.
    """

    mean: np.ndarray
    std: np.ndarray
    fitted_on: str

    def __post_init__(self) -> None:
        mean = np.array(self.mean, dtype=np.float64)
        std = np.array(self.std, dtype=np.float64)
        if mean.shape != (DESCRIPTOR_DIM,) or std.shape != (DESCRIPTOR_DIM,):
            raise ValueError("normalizer moments must have the descriptor dimension")
        if not np.all(std > 0):
            raise ValueError("normalizer std elements must be positive")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def normalize(self, descriptor: WeatherDescriptor) -> WeatherDescriptor:
        if descriptor.normalized_with is not None:
            raise NormalizerMismatchError(
                f"descriptor already normalized with {descriptor.normalized_with!r}"
            )
        return WeatherDescriptor(
            vector=(descriptor.vector - self.mean) / self.std,
            valid_time=descriptor.valid_time,
            normalized_with=self.fitted_on,
        )

    def denormalize(self, descriptor: WeatherDescriptor) -> WeatherDescriptor:
        if descriptor.normalized_with != self.fitted_on:
            raise NormalizerMismatchError(
                f"descriptor normalized with {descriptor.normalized_with!r}, "
                f"expected {self.fitted_on!r}"
            )
        return WeatherDescriptor(
            vector=descriptor.vector * self.std + self.mean,
            valid_time=descriptor.valid_time,
            normalized_with=None,
        )

    def normalize_matrix(self, vectors: np.ndarray) -> np.ndarray:
        """Standardize a (n, 31) matrix of raw descriptor vectors."""
        return (np.asarray(vectors, dtype=np.float64) - self.mean) / self.std

    def save(self, path: Path | str) -> None:
        payload = {
            "format": NORMALIZER_FORMAT,
            "version": 1,
            "fitted_on": self.fitted_on,
            "field_order": list(FIELD_ORDER),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }
        Path(path).write_text(json.dumps(payload, indent=2))

    @classmethod
    def load(cls, path: Path | str) -> "DescriptorNormalizer":
        payload = json.loads(Path(path).read_text())
        if payload.get("format") != NORMALIZER_FORMAT:
            raise ValueError(f"{path}: not a descriptor normalizer file")
        if tuple(payload["field_order"]) != FIELD_ORDER:
            raise ValueError(f"{path}: field order does not match this build")
        return cls(
            mean=np.array(payload["mean"]),
            std=np.array(payload["std"]),
            fitted_on=payload["fitted_on"],
        )


def fit_normalizer(
    descriptors: Iterable[WeatherDescriptor], dataset_id: str = "unnamed"
) -> DescriptorNormalizer:
    """Fit per-element mean and population std over a training set."""
    items = list(descriptors)
    if len(items) < 2:
        raise ValueError("fitting a normalizer requires at least 2 descriptors")
    for item in items:
        if item.normalized_with is not None:
            raise NormalizerMismatchError("normalizer must be fitted on raw descriptors")
    matrix = np.stack([item.vector for item in items])
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)  # population convention
    zero = std <= _ZERO_STD_REL_TOL * np.maximum(1.0, np.abs(mean))
    std = np.where(zero, 1.0, std)
    mean = np.where(zero & (np.abs(mean) <= _ZERO_STD_REL_TOL), 0.0, mean)
    # Cyclic encodings pass through unchanged.
    mean[:N_CYCLIC] = 0.0
    std[:N_CYCLIC] = 1.0
    return DescriptorNormalizer(mean=mean, std=std, fitted_on=dataset_id)


# ---------------------------------------------------------------------------
# Tiling
# ---------------------------------------------------------------------------

def tile_to_channels(
    descriptor: WeatherDescriptor | np.ndarray, height: int, width: int
) -> np.ndarray:
    """Tile a descriptor into constant image channels of shape (H, W, dim)."""
    if height <= 0 or width <= 0:
        raise ValueError("tile dimensions must be positive")
    vector = descriptor.vector if isinstance(descriptor, WeatherDescriptor) else np.asarray(descriptor)
    if vector.ndim != 1:
        raise ValueError("descriptor vector must be one-dimensional")
    return np.broadcast_to(
        vector.astype(np.float32), (height, width, vector.shape[0])
    ).copy()


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def read_nwp_csv(path: Path | str, site_id: str | None = None) -> list[NwpRecord]:
    """Read hourly NWP records from a CSV with header timestamp,site_id,<fields>.

    Field columns may appear in any order but must be exactly the canonical
    set. Rows with empty or non-numeric cells are rejected naming the field.
    """
    path = Path(path)
    records: list[NwpRecord] = []
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        if "timestamp" not in header or "site_id" not in header:
            raise IngestionError(f"{path}: header must contain timestamp and site_id")
        columns = set(header) - {"timestamp", "site_id"}
        missing = sorted(set(FIELD_ORDER) - columns)
        extra = sorted(columns - set(FIELD_ORDER))
        if missing:
            raise IngestionError(f"{path}: header missing field(s): {', '.join(missing)}")
        if extra:
            raise IngestionError(f"{path}: header has unknown column(s): {', '.join(extra)}")
        for row_no, row in enumerate(reader, start=2):
            if site_id is not None and row["site_id"] != site_id:
                continue
            values: dict[str, float] = {}
            for abbr in FIELD_ORDER:
                cell = (row.get(abbr) or "").strip()
                if not cell:
                    raise IngestionError(f"{path}:{row_no}: missing value for field {abbr}")
                try:
                    values[abbr] = float(cell)
                except ValueError as err:
                    raise IngestionError(
                        f"{path}:{row_no}: bad value for field {abbr}: {cell!r}"
                    ) from err
            records.append(
                NwpRecord(timestamp=parse_utc(row["timestamp"]), site_id=row["site_id"], values=values)
            )
    records.sort(key=lambda r: (r.site_id, r.timestamp))
    for prev, cur in zip(records, records[1:]):
        if prev.site_id == cur.site_id and prev.timestamp == cur.timestamp:
            raise IngestionError(
                f"{path}: duplicate record for {cur.site_id} at {format_utc(cur.timestamp)}"
            )
    return records


def write_nwp_csv(path: Path | str, records: Sequence[NwpRecord]) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["timestamp", "site_id", *FIELD_ORDER])
        for record in records:
            writer.writerow(
                [format_utc(record.timestamp), record.site_id]
                + [repr(float(record.values[abbr])) for abbr in FIELD_ORDER]
            )
