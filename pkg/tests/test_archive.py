"""Archive indexing, preprocessing, tuple enumeration, and split contracts."""

from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from camcast import archive as a
from camcast.descriptors import format_utc_compact
from camcast.resample import area_resize, area_weights
from conftest import UTC, make_frames, make_series

T0 = datetime(2019, 5, 1, 10, 0, tzinfo=UTC)
SITE = "testsite"


def brute_force_pairs(times, max_lead=360, step=10):
    """Oracle: all (t0, t) pairs with both frames present and lead in range."""
    have = set(times)
    pairs = []
    for t in sorted(times):
        for lead in range(0, max_lead + 1, step):
            future = t + timedelta(minutes=lead)
            if future in have:
                pairs.append((t, future, lead))
    return pairs


def write_frame(directory, timestamp, site=SITE, ext="png", value=128, size=(8, 8)):
    array = np.full((size[0], size[1], 3), value, dtype=np.uint8)
    path = directory / f"{site}_{format_utc_compact(timestamp)}.{ext}"
    Image.fromarray(array).save(path)
    return path


class TestIndexArchive:
    def test_sorted_with_gap_report(self, tmp_path):
        for minutes in (0, 10, 30):
            write_frame(tmp_path, T0 + timedelta(minutes=minutes))
        index = a.index_archive(tmp_path, SITE)
        assert [f.timestamp for f in index.frames] == [
            T0, T0 + timedelta(minutes=10), T0 + timedelta(minutes=30)
        ]
        assert len(index.gaps) == 1
        assert list(index.gaps[0].missing_times()) == [T0 + timedelta(minutes=20)]

    def test_empty_directory(self, tmp_path):
        index = a.index_archive(tmp_path, SITE)
        assert index.frames == []

    def test_off_grid_rejected(self, tmp_path):
        write_frame(tmp_path, T0)
        write_frame(tmp_path, T0 + timedelta(minutes=7))
        index = a.index_archive(tmp_path, SITE)
        assert len(index.frames) == 1
        assert len(index.rejected_offgrid) == 1

    def test_duplicate_timestamp_is_error(self, tmp_path):
        write_frame(tmp_path, T0, ext="png")
        write_frame(tmp_path, T0, ext="jpg")
        with pytest.raises(a.DuplicateFrameError):
            a.index_archive(tmp_path, SITE)

    def test_unparseable_name_skipped_with_report(self, tmp_path):
        write_frame(tmp_path, T0)
        (tmp_path / f"{SITE}_notatimestamp.png").write_bytes(b"junk")
        index = a.index_archive(tmp_path, SITE)
        assert len(index.frames) == 1
        assert len(index.unparseable) == 1

    def test_other_site_ignored(self, tmp_path):
        write_frame(tmp_path, T0)
        write_frame(tmp_path, T0, site="elsewhere")
        index = a.index_archive(tmp_path, SITE)
        assert len(index.frames) == 1

    def test_exclusion_list(self, tmp_path):
        write_frame(tmp_path, T0)
        write_frame(tmp_path, T0 + timedelta(minutes=10))
        listing = tmp_path / "exclude.txt"
        listing.write_text(f"# stuck head\n{T0.isoformat()}\n")
        index = a.index_archive(tmp_path, SITE, a.load_exclusions(listing))
        assert [f.timestamp for f in index.frames] == [T0 + timedelta(minutes=10)]
        assert len(index.excluded) == 1


class TestPreprocess:
    def test_uniform_white_maps_to_one(self):
        raw = np.full((64, 128, 3), 255, dtype=np.uint8)
        out = a.preprocess_image(raw)
        assert out.shape == (64, 128, 3)
        assert np.all(out == 1.0)

    def test_uniform_black_maps_to_minus_one(self):
        raw = np.zeros((64, 128, 3), dtype=np.uint8)
        assert np.all(a.preprocess_image(raw) == -1.0)

    def test_downscale_shape(self):
        raw = np.random.default_rng(0).integers(0, 256, size=(640, 1280, 3), dtype=np.uint8)
        assert a.preprocess_image(raw).shape == (64, 128, 3)

    def test_too_small_rejected(self):
        with pytest.raises(a.ArchiveError):
            a.preprocess_image(np.zeros((32, 128, 3), dtype=np.uint8))

    def test_idempotent_at_target_size(self):
        rng = np.random.default_rng(1)
        raw = rng.integers(0, 256, size=(64, 128, 3), dtype=np.uint8)
        once = a.preprocess_image(raw)
        back = np.round((once.astype(np.float64) + 1.0) * 127.5).astype(np.uint8)
        assert np.array_equal(back, raw)
        assert np.array_equal(a.preprocess_image(back), once)

    @settings(max_examples=25, deadline=None)
    @given(data=st.data())
    def test_monotone_in_intensity(self, data):
        h = data.draw(st.integers(4, 12))
        w = data.draw(st.integers(4, 12))
        rng = np.random.default_rng(data.draw(st.integers(0, 10000)))
        low = rng.integers(0, 200, size=(h, w, 3)).astype(np.uint8)
        high = np.clip(low + rng.integers(0, 55, size=(h, w, 3)), 0, 255).astype(np.uint8)
        out_low = a.preprocess_image(low, 2, 2)
        out_high = a.preprocess_image(high, 2, 2)
        assert np.all(out_high >= out_low - 1e-12)

    def test_corrupt_decode_raises(self, tmp_path):
        bad = tmp_path / f"{SITE}_{format_utc_compact(T0)}.png"
        bad.write_bytes(b"not a png at all")
        ref = a.FrameRef(site_id=SITE, timestamp=T0, path=bad)
        with pytest.raises(a.ArchiveError):
            a.load_frame(ref)


class TestAreaResample:
    def test_weights_are_row_stochastic(self):
        w = area_weights(10, 3)
        assert np.allclose(w.sum(axis=1), 1.0)
        assert np.all(w >= 0)

    def test_identity_at_same_size(self):
        assert np.array_equal(area_weights(5, 5), np.eye(5))

    def test_matches_block_mean_for_integer_factor(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(0, 255, size=(8, 12, 3))
        out = area_resize(img, 4, 6)
        blocks = img.reshape(4, 2, 6, 2, 3).mean(axis=(1, 3))
        assert np.allclose(out, blocks)

    def test_matches_brute_force_fractional(self):
        # Oracle: integrate the piecewise-constant image over each target cell.
        rng = np.random.default_rng(2)
        img = rng.uniform(0, 1, size=(5, 7))
        out = area_resize(img, 3, 4)
        for i in range(3):
            for j in range(4):
                r0, r1 = i * 5 / 3, (i + 1) * 5 / 3
                c0, c1 = j * 7 / 4, (j + 1) * 7 / 4
                total = 0.0
                for r in range(5):
                    for c in range(7):
                        dr = max(0.0, min(r1, r + 1) - max(r0, r))
                        dc = max(0.0, min(c1, c + 1) - max(c0, c))
                        total += img[r, c] * dr * dc
                expected = total / ((r1 - r0) * (c1 - c0))
                assert out[i, j] == pytest.approx(expected, rel=1e-12)

    def test_upscale_rejected(self):
        with pytest.raises(ValueError):
            area_weights(4, 8)


class TestEnumerateTuples:
    def test_gapless_hundred_frames(self):
        frames = make_frames(T0, 100)
        series = make_series(T0.replace(minute=0) - timedelta(hours=1), 30)
        count = sum(1 for _ in a.enumerate_tuples(frames, series))
        assert count == sum(100 - k for k in range(37)) == 3034

    def test_small_gap_case(self):
        # Frames at minutes 0, 10, 30 with leads {0, 10}: three lead-0 pairs
        # plus the single 0 -> 10 pairing.
        times = [T0, T0 + timedelta(minutes=10), T0 + timedelta(minutes=30)]
        frames = [f for f in make_frames(T0, 4) if f.timestamp in times]
        series = make_series(T0.replace(minute=0), 3)
        refs = list(a.enumerate_tuples(frames, series, max_lead_minutes=10))
        leads = sorted(r.lead_minutes for r in refs)
        assert leads == [0, 0, 0, 10]

    def test_single_frame_yields_lead_zero(self):
        frames = make_frames(T0, 1)
        series = make_series(T0.replace(minute=0), 2)
        refs = list(a.enumerate_tuples(frames, series))
        assert len(refs) == 1
        assert refs[0].lead_minutes == 0
        assert refs[0].present is refs[0].future

    def test_descriptor_hole_skips_with_count(self):
        frames = make_frames(T0, 2)
        series = make_series(T0.replace(minute=0), 0)  # covers only the first hour edge
        stats = a.EnumerationStats()
        refs = list(a.enumerate_tuples(frames, series, max_lead_minutes=10, stats=stats))
        assert stats.skipped_no_descriptor > 0
        assert len(refs) + stats.skipped_no_descriptor == 3

    @settings(max_examples=30, deadline=None)
    @given(
        keep=st.lists(st.booleans(), min_size=1, max_size=40),
        max_lead=st.sampled_from([0, 10, 30, 60, 120]),
    )
    def test_matches_brute_force_on_random_gap_archives(self, keep, max_lead):
        frames = [f for f, k in zip(make_frames(T0, len(keep)), keep) if k]
        series = make_series(T0.replace(minute=0) - timedelta(hours=1), 12)
        got = [
            (r.present.timestamp, r.future.timestamp, r.lead_minutes)
            for r in a.enumerate_tuples(frames, series, max_lead_minutes=max_lead)
        ]
        expected = brute_force_pairs([f.timestamp for f in frames], max_lead)
        assert got == expected

    def test_descriptors_attached_by_interpolation(self):
        frames = make_frames(T0, 2)
        series = make_series(T0.replace(minute=0), 2)
        refs = list(a.enumerate_tuples(frames, series, max_lead_minutes=10))
        for ref in refs:
            assert ref.present_descriptor.valid_time == ref.present.timestamp
            assert ref.future_descriptor.valid_time == ref.future.timestamp

    def test_sample_ref_invariants_enforced(self):
        frames = make_frames(T0, 2)
        series = make_series(T0.replace(minute=0), 1)
        w = series.at(T0)
        with pytest.raises(ValueError):
            a.SampleRef(present=frames[0], future=frames[1],
                        present_descriptor=w, future_descriptor=w, lead_minutes=20)


class TestSplitByYear:
    def _ref(self, t0, lead):
        frames = {
            0: a.FrameRef(SITE, t0, "/a.png"),
            lead: a.FrameRef(SITE, t0 + timedelta(minutes=lead), "/b.png"),
        }
        series = make_series(t0.replace(minute=0), max(1, lead // 60 + 1))
        return a.SampleRef(
            present=frames[0], future=frames[lead],
            present_descriptor=series.at(t0),
            future_descriptor=series.at(t0 + timedelta(minutes=lead)),
            lead_minutes=lead,
        )

    def test_basic_assignment(self):
        ref = self._ref(datetime(2019, 6, 1, 12, 0, tzinfo=UTC), 10)
        train, test = a.split_by_year([ref], {2019}, {2020})
        assert train == [ref] and test == []

    def test_straddling_pair_dropped(self):
        ref = self._ref(datetime(2019, 12, 31, 23, 50, tzinfo=UTC), 10)
        assert ref.future.timestamp.year == 2020
        train, test = a.split_by_year([ref], {2019}, {2020})
        assert train == [] and test == []

    def test_year_not_in_any_split_dropped(self):
        ref = self._ref(datetime(2021, 6, 1, 12, 0, tzinfo=UTC), 10)
        train, test = a.split_by_year([ref], {2019}, {2020})
        assert train == [] and test == []

    def test_all_in_test_year(self):
        refs = [self._ref(datetime(2020, 3, 1, 8, 0, tzinfo=UTC), 10)]
        train, test = a.split_by_year(refs, {2019}, {2020})
        assert train == [] and len(test) == 1

    def test_overlapping_splits_rejected(self):
        with pytest.raises(ValueError):
            a.split_by_year([], {2019}, {2019, 2020})


class TestManifest:
    def test_round_trip_and_resolve(self, tmp_path):
        for minutes in (0, 10, 20):
            write_frame(tmp_path, T0 + timedelta(minutes=minutes), size=(64, 128))
        index = a.index_archive(tmp_path, SITE)
        series = make_series(T0.replace(minute=0), 2)
        refs = list(a.enumerate_tuples(index.frames, series, max_lead_minutes=10))
        manifest = tmp_path / "train.csv"
        assert a.write_manifest(refs, manifest) == len(refs)
        rows = a.read_manifest(manifest)
        resolved = a.resolve_manifest(rows, index, series)
        assert [(r.present.timestamp, r.lead_minutes) for r in resolved] == [
            (r.present.timestamp, r.lead_minutes) for r in refs
        ]

    def test_load_tuple_materializes(self, tmp_path):
        write_frame(tmp_path, T0, value=255, size=(64, 128))
        index = a.index_archive(tmp_path, SITE)
        series = make_series(T0.replace(minute=0), 1)
        ref = next(iter(a.enumerate_tuples(index.frames, series, max_lead_minutes=0)))
        tup = a.load_tuple(ref)
        assert tup.present_image.shape == (64, 128, 3)
        assert np.all(tup.present_image == 1.0)
        assert tup.lead_minutes == 0
