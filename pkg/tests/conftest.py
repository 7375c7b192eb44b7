"""Shared test helpers: synthetic NWP records, descriptor series, tiny archives."""

from __future__ import annotations

import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import pytest
import torch

from camcast.archive import FrameRef, SampleTuple
from camcast.descriptors import (
    DescriptorSeries,
    NwpRecord,
    WeatherDescriptor,
    build_descriptor,
)
from camcast.fields import FIELD_ORDER

torch.set_num_threads(min(4, torch.get_num_threads()))

UTC = timezone.utc


def make_record(timestamp: datetime, fill: float = 0.0, bump: float = 1.0) -> NwpRecord:
    """Record whose field i carries fill + bump * i."""
    return NwpRecord(
        timestamp=timestamp,
        site_id="testsite",
        values={abbr: fill + bump * i for i, abbr in enumerate(FIELD_ORDER)},
    )


def make_series(start: datetime, hours: int, fill_fn=None) -> DescriptorSeries:
    """Hourly series over [start, start + hours]; fill_fn maps hour index to fill."""
    fill_fn = fill_fn or (lambda h: float(h))
    records = [
        make_record(start + timedelta(hours=h), fill=fill_fn(h)) for h in range(hours + 1)
    ]
    return DescriptorSeries(records)


def make_frames(start: datetime, count: int, site: str = "testsite") -> list[FrameRef]:
    return [
        FrameRef(site_id=site, timestamp=start + timedelta(minutes=10 * i),
                 path=Path(f"/virtual/{site}_{i}.png"))
        for i in range(count)
    ]


def make_descriptor(moment: datetime, fill: float = 0.0) -> WeatherDescriptor:
    return build_descriptor(make_record(moment.replace(minute=0, second=0, microsecond=0),
                                        fill=fill), moment.replace(minute=0, second=0, microsecond=0))


def toy_tuple(height: int = 4, width: int = 8, seed: int = 0,
              lead_minutes: int = 60) -> SampleTuple:
    """Tiny materialized example with random images and simple descriptors."""
    rng = np.random.default_rng(seed)
    t0 = datetime(2019, 6, 1, 12, tzinfo=UTC)
    w0 = build_descriptor(make_record(t0, fill=0.5), t0)
    t1 = t0 + timedelta(minutes=lead_minutes)
    wt = build_descriptor(make_record(t1.replace(minute=0), fill=1.5),
                          t1.replace(minute=0)) if lead_minutes % 60 == 0 else w0
    return SampleTuple(
        present_image=rng.uniform(-1, 1, size=(height, width, 3)).astype(np.float32),
        present_descriptor=w0,
        future_image=rng.uniform(-1, 1, size=(height, width, 3)).astype(np.float32),
        future_descriptor=wt,
        lead_minutes=lead_minutes,
    )


ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def record_criterion(name: str, passed: bool = True) -> None:
    ACCEPTANCE_RESULTS.append((name, "PASS" if passed else "FAIL"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one line per acceptance criterion after the run."""
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{status}] {name}")
