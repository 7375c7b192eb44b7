"""Human-evaluation protocols: blinded realism study and condition-matching audit.

The realism study samples daytime (present, descriptor) pairs from test
data, emits the real future frame and a generated counterpart per pair
under opaque ids, assigns items to examiners, and aggregates their
judgments into a confusion matrix. The condition audit records, per
compared pair, the observed and visualized category for six descriptive
criteria; a mismatch counts as a visualization failure only when attributed
to the generator rather than to an inaccurate forecast.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .descriptors import WeatherDescriptor, ensure_utc, format_utc, parse_utc
from .synthesis import restore_aspect, write_png

log = logging.getLogger(__name__)

QUESTION_TEXT = "What is your first impression of this image?"
ANSWER_REAL = "looks realistic"
ANSWER_GENERATED = "looks artificially generated"

TRUTH_REAL = "real"
TRUTH_GENERATED = "generated"
TRUTH_LABELS = (TRUTH_REAL, TRUTH_GENERATED)

ATTR_FORECAST = "inaccurate_forecast"
ATTR_VISUALIZATION = "inconsistent_visualization"

CRITERIA: dict[str, tuple[str, ...]] = {
    "cloud_cover": ("clear sky", "few", "cloudy", "overcast"),
    "cloud_type": ("cumuliform", "stratiform", "stratocumuliform", "cirriform"),
    "visibility": ("good", "poor"),
    "ground": ("dry", "wet", "frost", "snow"),
    "time_of_day": ("dawn", "daylight", "dusk", "night"),
    "sunlight": ("diffuse", "direct"),
}

ITEMS_MANIFEST_NAME = "manifest.json"
TRUTH_FILE_NAME = "truth.json"
ASSIGNMENTS_FILE_NAME = "assignments.json"


class EvaluationError(ValueError):
    """A study artifact (item set, judgment, checklist) violates its contract."""


class InsufficientDataError(EvaluationError):
    """Not enough eligible pairs to sample the requested study size."""


# ---------------------------------------------------------------------------
# Realism study types
# ---------------------------------------------------------------------------

@dataclass
class RealismItem:
    """One study image. Truth and timing metadata never reach examiners."""

    item_id: str
    image: np.ndarray  # [-1, 1] float frame
    truth: str
    site_id: str
    timestamp: datetime  # sampled pair's present time (hidden)
    lead_minutes: int  # hidden

    def __post_init__(self) -> None:
        if self.truth not in TRUTH_LABELS:
            raise EvaluationError(f"truth must be one of {TRUTH_LABELS}, got {self.truth!r}")
        self.timestamp = ensure_utc(self.timestamp)


@dataclass(frozen=True)
class JudgmentRecord:
    item_id: str
    examiner_id: str
    judged: str
    decided_at: datetime

    def __post_init__(self) -> None:
        if self.judged not in TRUTH_LABELS:
            raise EvaluationError(f"judged must be one of {TRUTH_LABELS}, got {self.judged!r}")
        object.__setattr__(self, "decided_at", ensure_utc(self.decided_at))


@dataclass
class ConfusionMatrix:
    """2x2 counts; rows = actual (real, generated), cols = judged likewise."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (2, 2) or (counts < 0).any():
            raise EvaluationError("confusion counts must be a non-negative 2x2 table")
        self.counts = counts

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        if self.total == 0:
            return 0.0
        return float(np.trace(self.counts)) / self.total


@dataclass
class EvalCandidate:
    """A test-set pairing eligible for study sampling."""

    site_id: str
    t0: datetime
    lead_minutes: int
    present_image: np.ndarray
    present_descriptor: WeatherDescriptor
    future_image: np.ndarray
    future_descriptor: WeatherDescriptor

    def __post_init__(self) -> None:
        self.t0 = ensure_utc(self.t0)


GenerateFn = Callable[[EvalCandidate, np.random.Generator], np.ndarray]


def _item_id(seed: int, site_id: str, ordinal: int) -> str:
    digest = hashlib.sha256(f"{seed}:{site_id}:{ordinal}".encode()).hexdigest()[:10]
    return f"item-{digest}"


def sample_realism_set(
    candidates: Sequence[EvalCandidate],
    generate: GenerateFn,
    n_pairs: int = 75,
    hour_range: tuple[int, int] = (6, 14),
    seed: int = 0,
) -> list[RealismItem]:
    """Draw the blinded study set: two items (real + generated) per sampled pair.

    Pairs are restricted to present times whose UTC hour falls in
    ``hour_range``; the lead is drawn uniformly over what the archive offers
    for the sampled present time. The returned list is shuffled so position
    leaks nothing about truth.
    """
    lo, hi = hour_range
    eligible: dict[datetime, list[EvalCandidate]] = {}
    for candidate in candidates:
        if lo <= candidate.t0.hour < hi:
            eligible.setdefault(candidate.t0, []).append(candidate)
    if len(eligible) < n_pairs:
        raise InsufficientDataError(
            f"need {n_pairs} eligible present times in {lo:02d}-{hi:02d} UTC, "
            f"have {len(eligible)}"
        )
    rng = np.random.default_rng(seed)
    times = sorted(eligible)
    chosen = rng.choice(len(times), size=n_pairs, replace=False)
    items: list[RealismItem] = []
    ordinal = 0
    for index in chosen:
        pool = sorted(eligible[times[int(index)]], key=lambda c: c.lead_minutes)
        candidate = pool[int(rng.integers(len(pool)))]
        for truth, image in (
            (TRUTH_REAL, candidate.future_image),
            (TRUTH_GENERATED, generate(candidate, rng)),
        ):
            items.append(
                RealismItem(
                    item_id=_item_id(seed, candidate.site_id, ordinal),
                    image=image,
                    truth=truth,
                    site_id=candidate.site_id,
                    timestamp=candidate.t0,
                    lead_minutes=candidate.lead_minutes,
                )
            )
            ordinal += 1
    return [items[int(i)] for i in rng.permutation(len(items))]


def assign_items(
    items: Sequence[RealismItem],
    examiner_ids: Sequence[str],
    per_examiner: int = 30,
    seed: int = 0,
) -> dict[str, list[str]]:
    """Uniform random assignment without replacement per examiner.

    Examiners sample independently, so one item may reach several of them.
    """
    if per_examiner > len(items):
        raise EvaluationError(
            f"cannot assign {per_examiner} items from a set of {len(items)}"
        )
    rng = np.random.default_rng(seed)
    ids = [item.item_id for item in items]
    assignment: dict[str, list[str]] = {}
    for examiner in examiner_ids:
        picks = rng.choice(len(ids), size=per_examiner, replace=False)
        assignment[examiner] = [ids[int(i)] for i in picks]
    return assignment


def aggregate_confusion(
    judgments: Iterable[JudgmentRecord],
    truth_by_item: Mapping[str, str],
) -> ConfusionMatrix:
    """Count judgments by (actual, judged); duplicates keep the latest decision."""
    latest: dict[tuple[str, str], JudgmentRecord] = {}
    duplicates = 0
    for record in judgments:
        if record.item_id not in truth_by_item:
            raise EvaluationError(f"judgment references unknown item {record.item_id!r}")
        key = (record.item_id, record.examiner_id)
        if key in latest:
            duplicates += 1
            if record.decided_at < latest[key].decided_at:
                continue
        latest[key] = record
    if duplicates:
        log.warning("%d duplicate judgment(s); latest decision wins", duplicates)
    counts = np.zeros((2, 2), dtype=np.int64)
    for record in latest.values():
        row = TRUTH_LABELS.index(truth_by_item[record.item_id])
        col = TRUTH_LABELS.index(record.judged)
        counts[row, col] += 1
    return ConfusionMatrix(counts=counts)


# ---------------------------------------------------------------------------
# Condition-matching audit
# ---------------------------------------------------------------------------

@dataclass
class CriterionEntry:
    """Observed vs visualized category for one criterion of one pair."""

    observed: str
    visualized: str
    attribution: str | None = None

    @property
    def match(self) -> bool:
        return self.observed == self.visualized


@dataclass
class ConditionChecklist:
    pair_id: str
    entries: dict[str, CriterionEntry]

    def __post_init__(self) -> None:
        missing = sorted(set(CRITERIA) - set(self.entries))
        if missing:
            raise EvaluationError(
                f"checklist {self.pair_id}: missing criteria {', '.join(missing)}"
            )
        extra = sorted(set(self.entries) - set(CRITERIA))
        if extra:
            raise EvaluationError(
                f"checklist {self.pair_id}: unknown criteria {', '.join(extra)}"
            )
        for criterion, entry in self.entries.items():
            vocabulary = CRITERIA[criterion]
            for label in (entry.observed, entry.visualized):
                if label not in vocabulary:
                    raise EvaluationError(
                        f"checklist {self.pair_id}: {label!r} is not a {criterion} category"
                    )
            if entry.match and entry.attribution is not None:
                raise EvaluationError(
                    f"checklist {self.pair_id}: attribution given for matching {criterion}"
                )
            if not entry.match:
                if entry.attribution not in (ATTR_FORECAST, ATTR_VISUALIZATION):
                    raise EvaluationError(
                        f"checklist {self.pair_id}: mismatching {criterion} "
                        f"needs an attribution"
                    )

    def has_visualization_failure(self) -> bool:
        return any(
            entry.attribution == ATTR_VISUALIZATION for entry in self.entries.values()
        )


@dataclass
class AuditSummary:
    n_checklists: int
    match_counts: dict[str, int]
    visualization_failures: int


def score_condition_audit(checklists: Sequence[ConditionChecklist]) -> AuditSummary:
    """Per-criterion match counts plus the count of generator-attributed failures.

    A pair counts as a visualization failure when at least one mismatch is
    attributed to the visualization being inconsistent with an accurate
    forecast; forecast-attributed mismatches never count.
    """
    match_counts = {criterion: 0 for criterion in CRITERIA}
    failures = 0
    for checklist in checklists:
        for criterion, entry in checklist.entries.items():
            if entry.match:
                match_counts[criterion] += 1
        if checklist.has_visualization_failure():
            failures += 1
    return AuditSummary(
        n_checklists=len(checklists),
        match_counts=match_counts,
        visualization_failures=failures,
    )


# ---------------------------------------------------------------------------
# Study file formats
# ---------------------------------------------------------------------------

def write_items(
    items: Sequence[RealismItem],
    outdir: Path | str,
    aspect_ratio: float = 2.0,
) -> Path:
    """Materialize a study: display PNGs, public manifest, sealed truth file.

    The manifest is a plain list of {item_id, image}; truth and timing live
    only in the sealed file, which the serving layer must never expose.
    """
    outdir = Path(outdir)
    (outdir / "images").mkdir(parents=True, exist_ok=True)
    manifest = []
    sealed: dict[str, dict] = {}
    for item in items:
        relative = f"images/{item.item_id}.png"
        write_png(outdir / relative, restore_aspect(item.image, aspect_ratio))
        manifest.append({"item_id": item.item_id, "image": relative})
        sealed[item.item_id] = {
            "truth": item.truth,
            "site_id": item.site_id,
            "timestamp": format_utc(item.timestamp),
            "lead_minutes": item.lead_minutes,
        }
    manifest_path = outdir / ITEMS_MANIFEST_NAME
    manifest_path.write_text(json.dumps(manifest, indent=2))
    (outdir / TRUTH_FILE_NAME).write_text(json.dumps(sealed, indent=2))
    return manifest_path


def read_items_manifest(path: Path | str) -> list[dict]:
    manifest = json.loads(Path(path).read_text())
    if not isinstance(manifest, list):
        raise EvaluationError(f"{path}: items manifest must be a JSON list")
    return manifest


def read_truth(path: Path | str) -> dict[str, str]:
    sealed = json.loads(Path(path).read_text())
    return {item_id: meta["truth"] for item_id, meta in sealed.items()}


def write_assignments(assignment: Mapping[str, Sequence[str]], path: Path | str) -> None:
    Path(path).write_text(json.dumps({k: list(v) for k, v in assignment.items()}, indent=2))


def read_assignments(path: Path | str) -> dict[str, list[str]]:
    return json.loads(Path(path).read_text())


def append_judgment(path: Path | str, record: JudgmentRecord) -> None:
    payload = {
        "item_id": record.item_id,
        "examiner_id": record.examiner_id,
        "judged": record.judged,
        "decided_at": format_utc(record.decided_at),
    }
    with Path(path).open("a") as handle:
        handle.write(json.dumps(payload) + "\n")


def read_judgments(path: Path | str) -> list[JudgmentRecord]:
    records: list[JudgmentRecord] = []
    path = Path(path)
    if not path.exists():
        return records
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        raw = json.loads(line)
        records.append(
            JudgmentRecord(
                item_id=raw["item_id"],
                examiner_id=raw["examiner_id"],
                judged=raw["judged"],
                decided_at=parse_utc(raw["decided_at"]),
            )
        )
    return records


def now_utc() -> datetime:
    return datetime.now(timezone.utc)


# ---------------------------------------------------------------------------
# Checklist CSV
# ---------------------------------------------------------------------------

def _checklist_columns() -> list[str]:
    columns = ["pair_id"]
    for criterion in CRITERIA:
        columns += [f"{criterion}_observed", f"{criterion}_visualized", f"{criterion}_attribution"]
    return columns


def write_checklists_csv(checklists: Sequence[ConditionChecklist], path: Path | str) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(_checklist_columns())
        for checklist in checklists:
            row = [checklist.pair_id]
            for criterion in CRITERIA:
                entry = checklist.entries[criterion]
                row += [entry.observed, entry.visualized, entry.attribution or ""]
            writer.writerow(row)


def read_checklists_csv(path: Path | str) -> list[ConditionChecklist]:
    checklists: list[ConditionChecklist] = []
    with Path(path).open(newline="") as handle:
        reader = csv.DictReader(handle)
        for row_no, row in enumerate(reader, start=2):
            entries = {}
            for criterion in CRITERIA:
                observed = (row.get(f"{criterion}_observed") or "").strip()
                visualized = (row.get(f"{criterion}_visualized") or "").strip()
                attribution = (row.get(f"{criterion}_attribution") or "").strip() or None
                if not observed or not visualized:
                    raise EvaluationError(
                        f"{path}:{row_no}: incomplete checklist (criterion {criterion})"
                    )
                entries[criterion] = CriterionEntry(
                    observed=observed, visualized=visualized, attribution=attribution
                )
            checklists.append(
                ConditionChecklist(pair_id=row.get("pair_id") or f"row{row_no}", entries=entries)
            )
    return checklists


# ---------------------------------------------------------------------------
# Text reports
# ---------------------------------------------------------------------------

def render_confusion_text(matrix: ConfusionMatrix, title: str = "Realism study") -> str:
    c = matrix.counts
    lines = [
        title,
        f"{'Actual':>10} | {'Judged real':>12} {'Judged generated':>17}",
        f"{'real':>10} | {c[0, 0]:>12d} {c[0, 1]:>17d}",
        f"{'generated':>10} | {c[1, 0]:>12d} {c[1, 1]:>17d}",
        f"judgments: {matrix.total}   accuracy: {matrix.accuracy * 100:.2f}%",
    ]
    return "\n".join(lines)


def render_audit_text(summary: AuditSummary, title: str = "Condition audit") -> str:
    lines = [title, f"pairs compared: {summary.n_checklists}"]
    for criterion in CRITERIA:
        lines.append(
            f"{criterion:>12}: {summary.match_counts[criterion]}/{summary.n_checklists} matching"
        )
    lines.append(f"visualization failures: {summary.visualization_failures}")
    return "\n".join(lines)
