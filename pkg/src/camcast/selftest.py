"""Fast invariant checks runnable from the command line.

Each check exercises one documented contract with a small deterministic
instance; the CLI prints one line per check and fails if any check fails.
These are smoke tests, not the full pytest suite.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

import numpy as np
import torch

from . import analogs, archive, descriptors, losses, models
from .fields import FIELD_ORDER


def _fake_record(moment: datetime, fill: float = 1.0) -> descriptors.NwpRecord:
    return descriptors.NwpRecord(
        timestamp=moment,
        site_id="selftest",
        values={abbr: fill + i for i, abbr in enumerate(FIELD_ORDER)},
    )


def check_descriptor_roundtrip() -> str:
    base = datetime(2019, 7, 1, 12, tzinfo=timezone.utc)
    w = descriptors.build_descriptor(_fake_record(base), base)
    assert abs(w.vector[0] ** 2 + w.vector[1] ** 2 - 1) < 1e-9
    normalizer = descriptors.fit_normalizer(
        [w, descriptors.build_descriptor(_fake_record(base, 5.0), base)], "selftest"
    )
    restored = normalizer.denormalize(normalizer.normalize(w))
    assert np.allclose(restored.vector, w.vector, atol=1e-9)
    return "descriptor encode/normalize round trip"


def check_interpolation_endpoints() -> str:
    t0 = datetime(2019, 7, 1, 12, tzinfo=timezone.utc)
    before = descriptors.build_descriptor(_fake_record(t0, 10.0), t0)
    after = descriptors.build_descriptor(_fake_record(t0 + timedelta(hours=1), 20.0), t0 + timedelta(hours=1))
    mid = descriptors.interpolate_descriptor(before, after, t0 + timedelta(minutes=30))
    assert abs(mid.vector[4] - 15.0) < 1e-12
    assert np.allclose(mid.vector[4:], (before.vector[4:] + after.vector[4:]) / 2)
    start = descriptors.interpolate_descriptor(before, after, t0)
    assert np.array_equal(start.vector[4:], before.vector[4:])
    return "hourly interpolation endpoints and midpoint"


def check_tuple_count() -> str:
    t0 = datetime(2019, 7, 1, 6, tzinfo=timezone.utc)
    frames = [
        archive.FrameRef("selftest", t0 + timedelta(minutes=10 * i), f"/f{i}.png")
        for i in range(20)
    ]
    records = [
        _fake_record(t0.replace(minute=0) + timedelta(hours=h)) for h in range(-1, 12)
    ]
    series = descriptors.DescriptorSeries(records)
    count = sum(1 for _ in archive.enumerate_tuples(frames, series, 60, 10))
    expected = sum(20 - k for k in range(7))
    assert count == expected, (count, expected)
    return "gapless tuple enumeration count"


def check_cutmix_identities() -> str:
    real = torch.arange(2 * 4 * 2 * 3, dtype=torch.float32).reshape(2, 4, 2, 3)
    fake = -real
    ones = torch.ones(2, 1, 2, 3)
    assert torch.equal(losses.compose_cutmix(real, fake, ones), real)
    assert torch.equal(losses.compose_cutmix(real, fake, 1 - ones), fake)
    rng = torch.Generator().manual_seed(0)
    mix = losses.cutmix(real, real, rng)
    assert torch.equal(mix.composite, real)
    return "cut-mix identity and self-composite"


def check_spectral_norm() -> str:
    weight = torch.tensor([[3.0, 0.0], [0.0, 1.0]])
    u = torch.tensor([1.0, 0.0])
    normalized, _ = models.spectral_normalize(weight, u)
    assert torch.allclose(normalized, weight / 3.0)
    rng = np.random.default_rng(0)
    w = torch.as_tensor(rng.normal(size=(6, 9)))
    u = models.l2_normalize(torch.as_tensor(rng.normal(size=6)))
    for _ in range(50):
        normalized, u = models.spectral_normalize(w, u)
    top = np.linalg.svd(normalized.numpy(), compute_uv=False)[0]
    assert 0.95 <= top <= 1.001, top
    return "spectral normalization analytic and bound"


def check_analog_bruteforce() -> str:
    rng = np.random.default_rng(1)
    t0 = datetime(2019, 7, 1, tzinfo=timezone.utc)
    frames = [
        archive.FrameRef("selftest", t0 + timedelta(minutes=10 * i), f"/f{i}.png")
        for i in range(30)
    ]
    vectors = rng.normal(size=(30, 31))
    pairs = [
        (frame, descriptors.WeatherDescriptor(vector=v, valid_time=frame.timestamp,
                                              normalized_with="selftest"))
        for frame, v in zip(frames, vectors)
    ]
    table = analogs.build_archive(pairs, "selftest")
    query = descriptors.WeatherDescriptor(
        vector=rng.normal(size=31), valid_time=t0, normalized_with="selftest"
    )
    got = analogs.retrieve_individual(table, query)
    want = min(range(30), key=lambda i: float(((vectors[i] - query.vector) ** 2).sum()))
    assert got.timestamp == frames[want].timestamp
    return "analog retrieval equals brute force"


def check_confusion_accuracy() -> str:
    from .evaluation import ConfusionMatrix

    matrix = ConfusionMatrix(counts=np.array([[57, 18], [43, 32]]))
    assert matrix.total == 150
    assert round(matrix.accuracy * 100, 2) == 59.33
    return "confusion matrix accuracy arithmetic"


CHECKS = (
    check_descriptor_roundtrip,
    check_interpolation_endpoints,
    check_tuple_count,
    check_cutmix_identities,
    check_spectral_norm,
    check_analog_bruteforce,
    check_confusion_accuracy,
)


def run_selftest() -> list[tuple[str, bool, str]]:
    results = []
    for check in CHECKS:
        try:
            label = check()
            results.append((check.__name__, True, label))
        except Exception as err:  # noqa: BLE001 - report, don't crash the runner
            results.append((check.__name__, False, f"{type(err).__name__}: {err}"))
    return results
