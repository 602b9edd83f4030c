import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evpong.errors import DataError, EventFormatError, OrderingError
from evpong.events import (
    Event,
    EventArray,
    EventBatch,
    Roi,
    clip_to_roi,
    read_events_binary,
    read_events_csv,
    read_event_stream,
    window_event_array,
    window_events,
    write_events_binary,
    write_events_csv,
)

DIMS = (1280, 720)


def make_batch(rows, t_start=0, t_end=1000, dims=DIMS):
    return EventBatch(EventArray.from_events([Event(*r) for r in rows]), t_start, t_end, dims)


class TestCsvIO:
    def test_single_line_maps_fields(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("1000,640,360,1\n")
        events = list(read_events_csv(path, DIMS))
        assert events == [Event(x=640, y=360, t=1000, p=1)]

    def test_empty_file_empty_sequence(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("")
        assert list(read_events_csv(path, DIMS)) == []

    def test_out_of_bounds_x_rejected(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("1000,1280,0,1\n")
        with pytest.raises(EventFormatError, match="x=1280"):
            list(read_events_csv(path, DIMS))

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("t,x,y,p\n10,1,2,1\nbogus,line\n")
        with pytest.raises(EventFormatError, match="line 3"):
            list(read_events_csv(path, DIMS))

    def test_non_monotone_timestamps_rejected(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("10,1,2,1\n5,1,2,0\n")
        with pytest.raises(OrderingError, match="line 2"):
            list(read_events_csv(path, DIMS))

    def test_header_skipped(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("t,x,y,p\n7,3,4,0\n")
        assert list(read_events_csv(path, DIMS)) == [Event(3, 4, 7, 0)]

    def test_bad_polarity_rejected(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("7,3,4,2\n")
        with pytest.raises(EventFormatError, match="polarity"):
            list(read_events_csv(path, DIMS))


class TestRoundTrip:
    def test_csv_round_trip(self, tmp_path, rng):
        events = _random_events(rng, 500)
        path = tmp_path / "e.csv"
        write_events_csv(path, events)
        assert list(read_events_csv(path, DIMS)) == events

    def test_binary_round_trip(self, tmp_path, rng):
        events = _random_events(rng, 500)
        arr = EventArray.from_events(events)
        path = tmp_path / "e.evt"
        write_events_binary(path, arr, DIMS)
        back, dims = read_events_binary(path)
        assert dims == DIMS
        assert list(back) == events

    def test_binary_record_is_16_bytes(self, tmp_path):
        arr = EventArray.from_events([Event(1, 2, 3, 1), Event(4, 5, 6, 0)])
        path = tmp_path / "e.evt"
        write_events_binary(path, arr, DIMS)
        raw = path.read_bytes()
        assert raw[:4] == b"EVT1"
        assert len(raw) == 4 + 8 + 2 * 16

    def test_stream_reader_sniffs_binary(self, tmp_path):
        arr = EventArray.from_events([Event(1, 2, 3, 1)])
        path = tmp_path / "e.evt"
        write_events_binary(path, arr, DIMS)
        assert list(read_event_stream(path, DIMS)) == [Event(1, 2, 3, 1)]

    def test_binary_bad_magic(self, tmp_path):
        path = tmp_path / "e.evt"
        path.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(EventFormatError, match="magic"):
            read_events_binary(path)


def _random_events(rng, n, dims=DIMS):
    ts = np.sort(rng.integers(0, 100_000, n))
    return [
        Event(int(rng.integers(0, dims[0])), int(rng.integers(0, dims[1])),
              int(t), int(rng.integers(0, 2)))
        for t in ts
    ]


class TestWindowing:
    def test_direct_partition(self):
        events = [Event(0, 0, 100, 1), Event(1, 1, 900, 0), Event(2, 2, 1100, 1)]
        batches = list(window_events(events, 1000, DIMS))
        assert [len(b) for b in batches] == [2, 1]
        assert [b.t_start for b in batches] == [0, 1000]
        assert [e.t for e in batches[0].events] == [100, 900]
        assert [e.t for e in batches[1].events] == [1100]

    def test_empty_stream(self):
        assert list(window_events([], 1000, DIMS)) == []

    def test_half_open_boundary(self):
        events = [Event(0, 0, 999, 1), Event(0, 0, 1000, 1)]
        batches = list(window_events(events, 1000, DIMS))
        assert [len(b) for b in batches] == [1, 1]

    def test_gap_emits_empty_windows(self):
        events = [Event(0, 0, 100, 1), Event(0, 0, 4500, 1)]
        batches = list(window_events(events, 1000, DIMS))
        assert [len(b) for b in batches] == [1, 0, 0, 0, 1]

    def test_concatenation_preserves_stream(self, rng):
        events = _random_events(rng, 400)
        batches = list(window_events(events, 777, DIMS))
        flat = [e for b in batches for e in b.events]
        assert flat == events

    def test_array_windowing_matches_lazy(self, rng):
        events = _random_events(rng, 400)
        lazy = list(window_events(events, 777, DIMS))
        bulk = window_event_array(EventArray.from_events(events), 777, DIMS)
        assert len(lazy) == len(bulk)
        for a, b in zip(lazy, bulk):
            assert a.t_start == b.t_start and a.t_end == b.t_end
            assert list(a.events) == list(b.events)

    def test_bad_window_size(self):
        with pytest.raises(DataError):
            list(window_events([Event(0, 0, 0, 1)], 0, DIMS))


class TestClipToRoi:
    def test_full_sensor_is_identity(self, rng):
        batch = make_batch([(5, 5, 10, 1), (100, 200, 20, 0)])
        out = clip_to_roi(batch, Roi.full_sensor(DIMS))
        assert list(out.events) == list(batch.events)

    def test_outside_dropped_inclusive_bounds(self):
        roi = Roi(10, 20, 10, 20)
        batch = make_batch([(5, 15, 1, 1), (10, 10, 2, 1), (20, 20, 3, 0), (21, 15, 4, 1)])
        out = clip_to_roi(batch, roi)
        assert [(e.x, e.y) for e in out.events] == [(10, 10), (20, 20)]

    @given(st.lists(st.tuples(st.integers(0, 99), st.integers(0, 99)), max_size=60))
    @settings(max_examples=50, deadline=None)
    def test_idempotent(self, coords):
        batch = make_batch([(x, y, i, 1) for i, (x, y) in enumerate(coords)], dims=(100, 100))
        roi = Roi(20, 60, 10, 80)
        once = clip_to_roi(batch, roi)
        twice = clip_to_roi(once, roi)
        assert list(once.events) == list(twice.events)

    def test_degenerate_roi_rejected(self):
        with pytest.raises(DataError):
            Roi(10, 10, 0, 5)

    def test_miss_count_range(self):
        with pytest.raises(DataError):
            Roi(0, 10, 0, 10, miss_count=4)
