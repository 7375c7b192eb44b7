"""Analog retrieval vs exhaustive brute-force oracles, including tie-breaks."""

from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
import pytest

from camcast import analogs as an
from camcast.archive import FrameRef
from camcast.descriptors import NormalizerMismatchError, WeatherDescriptor
from camcast.fields import DESCRIPTOR_DIM
from conftest import UTC

T0 = datetime(2019, 4, 1, 0, 0, tzinfo=UTC)
NORM_ID = "unit-test-norm"


def frame(i: int, minutes: int) -> FrameRef:
    return FrameRef(site_id="s", timestamp=T0 + timedelta(minutes=minutes),
                    path=Path(f"/a/f{i:03d}.png"))


def descriptor(vector, minutes: int) -> WeatherDescriptor:
    full = np.zeros(DESCRIPTOR_DIM)
    full[4:4 + len(vector)] = vector
    return WeatherDescriptor(vector=full, valid_time=T0 + timedelta(minutes=minutes),
                             normalized_with=NORM_ID)


def build(vectors, minute_steps=None) -> an.AnalogArchive:
    minute_steps = minute_steps or [10 * i for i in range(len(vectors))]
    pairs = [
        (frame(i, m), descriptor(v, m))
        for i, (v, m) in enumerate(zip(vectors, minute_steps))
    ]
    return an.build_archive(pairs, NORM_ID)


def brute_force_individual(archive: an.AnalogArchive, query: np.ndarray) -> int:
    best, best_d = None, None
    for i in range(len(archive)):
        dist = float(((archive.vectors[i] - query) ** 2).sum())
        if best_d is None or dist < best_d:
            best, best_d = i, dist
    return best


def brute_force_sequence(archive: an.AnalogArchive, query: np.ndarray,
                         cadence: int) -> int | None:
    length = query.shape[0]
    step = timedelta(minutes=cadence)
    best, best_d = None, None
    for start in range(len(archive) - length + 1):
        ok = all(
            archive.frames[start + k + 1].timestamp - archive.frames[start + k].timestamp == step
            for k in range(length - 1)
        )
        if not ok:
            continue
        dist = float(((archive.vectors[start:start + length] - query) ** 2).sum())
        if best_d is None or dist < best_d:
            best, best_d = start, dist
    return best


class TestRetrieveIndividual:
    def test_nearest_point(self):
        archive = build([[0, 0], [1, 1], [3, 3]])
        got = an.retrieve_individual(archive, descriptor([0.9, 0.9], 0))
        assert got.timestamp == archive.frames[1].timestamp

    def test_exact_hit_distance_zero(self):
        archive = build([[0, 0], [1, 1], [3, 3]])
        got = an.retrieve_individual(archive, descriptor([3, 3], 0))
        assert got.timestamp == archive.frames[2].timestamp

    def test_tie_breaks_to_earliest(self):
        archive = build([[5, 5], [1, 1], [1, 1], [5, 5]])
        got = an.retrieve_individual(archive, descriptor([1, 1], 0))
        assert got.timestamp == archive.frames[1].timestamp

    def test_normalizer_mismatch_refused(self):
        archive = build([[0, 0]])
        raw = WeatherDescriptor(vector=np.zeros(DESCRIPTOR_DIM), valid_time=T0)
        with pytest.raises(NormalizerMismatchError):
            an.retrieve_individual(archive, raw)

    def test_matches_brute_force_random(self):
        rng = np.random.default_rng(0)
        for _ in range(40):
            n = int(rng.integers(1, 50))
            vectors = rng.normal(size=(n, 3))
            if n > 3 and rng.random() < 0.5:
                vectors[n // 2] = vectors[0]  # plant a potential tie
            archive = build(vectors.tolist())
            query = rng.normal(size=3)
            got = an.retrieve_individual(archive, descriptor(query.tolist(), 0))
            want = brute_force_individual(archive, descriptor(query.tolist(), 0).vector)
            assert got.timestamp == archive.frames[want].timestamp


class TestRetrieveSequence:
    def test_two_run_example(self):
        # Runs A = [(0,0), (0,0)] and B = [(1,1), (2,2)] (separated by a gap);
        # query [(1,1), (1,1)]: distance to B is sqrt(2) < 2 to A.
        archive = build(
            [[0, 0], [0, 0], [1, 1], [2, 2]],
            minute_steps=[0, 10, 100, 110],
        )
        query = [descriptor([1, 1], 0), descriptor([1, 1], 10)]
        got = an.retrieve_sequence(archive, query, cadence_minutes=10)
        assert [f.timestamp for f in got] == [
            archive.frames[2].timestamp, archive.frames[3].timestamp
        ]

    def test_exact_run_hit(self):
        archive = build([[0, 0], [1, 1], [2, 2], [9, 9]])
        query = [descriptor([1, 1], 0), descriptor([2, 2], 10)]
        got = an.retrieve_sequence(archive, query, cadence_minutes=10)
        assert [f.timestamp for f in got] == [
            archive.frames[1].timestamp, archive.frames[2].timestamp
        ]

    def test_window_never_spans_gap(self):
        # Entries 1 and 2 are nearest but separated by a gap.
        archive = build(
            [[5, 5], [1, 1], [1, 1], [4, 4]],
            minute_steps=[0, 10, 40, 50],
        )
        query = [descriptor([1, 1], 0), descriptor([1, 1], 10)]
        got = an.retrieve_sequence(archive, query, cadence_minutes=10)
        spans = got[1].timestamp - got[0].timestamp
        assert spans == timedelta(minutes=10)

    def test_no_gapless_run_error_names_longest(self):
        archive = build([[0, 0], [1, 1], [2, 2]], minute_steps=[0, 30, 60])
        with pytest.raises(an.NoGaplessRunError) as excinfo:
            an.retrieve_sequence(archive, [descriptor([0, 0], 0)] * 2, cadence_minutes=10)
        assert excinfo.value.longest == 1
        assert "longest" in str(excinfo.value)

    def test_length_one_equals_individual(self):
        rng = np.random.default_rng(3)
        vectors = rng.normal(size=(20, 4))
        archive = build(vectors.tolist())
        query = descriptor(rng.normal(size=4).tolist(), 0)
        alone = an.retrieve_sequence(archive, [query], cadence_minutes=10)
        assert alone[0].timestamp == an.retrieve_individual(archive, query).timestamp

    def test_tie_breaks_to_earliest_start(self):
        vectors = [[7, 7], [1, 1], [2, 2], [1, 1], [2, 2]]
        archive = build(vectors)
        query = [descriptor([1, 1], 0), descriptor([2, 2], 10)]
        got = an.retrieve_sequence(archive, query, cadence_minutes=10)
        assert got[0].timestamp == archive.frames[1].timestamp

    def test_matches_brute_force_random_with_gaps(self):
        rng = np.random.default_rng(7)
        for _ in range(40):
            n = int(rng.integers(2, 40))
            vectors = rng.normal(size=(n, 2))
            minutes, t = [], 0
            for _ in range(n):
                minutes.append(t)
                t += 10 if rng.random() < 0.8 else 30
            archive = build(vectors.tolist(), minute_steps=minutes)
            length = int(rng.integers(1, 5))
            query = np.stack(
                [descriptor(rng.normal(size=2).tolist(), 0).vector for _ in range(length)]
            )
            want = brute_force_sequence(archive, query, cadence=10)
            if want is None:
                with pytest.raises(an.NoGaplessRunError):
                    an.retrieve_sequence(
                        archive,
                        [descriptor(q[4:6].tolist(), 0) for q in query],
                        cadence_minutes=10,
                    )
                continue
            got = an.retrieve_sequence(
                archive, [descriptor(q[4:6].tolist(), 0) for q in query], cadence_minutes=10
            )
            assert got[0].timestamp == archive.frames[want].timestamp


class TestArchiveContracts:
    def test_distance_never_beaten_by_any_entry(self):
        rng = np.random.default_rng(5)
        vectors = rng.normal(size=(30, 3))
        archive = build(vectors.tolist())
        query = descriptor(rng.normal(size=3).tolist(), 0)
        got = an.retrieve_individual(archive, query)
        index = [f.timestamp for f in archive.frames].index(got.timestamp)
        best = ((archive.vectors[index] - query.vector) ** 2).sum()
        for row in archive.vectors:
            assert best <= ((row - query.vector) ** 2).sum() + 1e-15

    def test_appending_farther_entries_is_invariant(self):
        vectors = [[0.0, 0.0], [1.0, 1.0]]
        archive = build(vectors)
        query = descriptor([0.1, 0.1], 0)
        first = an.retrieve_individual(archive, query)
        extended = build(vectors + [[50.0, 50.0]])
        assert an.retrieve_individual(extended, query).timestamp == first.timestamp

    def test_empty_archive_rejected(self):
        with pytest.raises(ValueError):
            an.build_archive([], NORM_ID)

    def test_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        archive = build(rng.normal(size=(5, 3)).tolist())
        an.save_archive(archive, tmp_path / "archive.csv")
        loaded = an.load_archive(tmp_path / "archive.csv")
        assert loaded.normalizer_id == NORM_ID
        assert np.array_equal(loaded.vectors, archive.vectors)
        assert [f.timestamp for f in loaded.frames] == [f.timestamp for f in archive.frames]
