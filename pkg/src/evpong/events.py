"""Event stream domain types and file IO.

An event is the unit record of a dynamic vision sensor: pixel location,
microsecond timestamp, and polarity (1 = brightness increase, 0 = decrease).
Pixel (x, y) samples the continuous image plane at exactly (x, y); all
sub-pixel quantities elsewhere in the package share this convention.

Two interchangeable file formats are supported:

* CSV, rows ``t,x,y,p`` (header optional), timestamps in microseconds.
* Binary: magic ``EVT1``, u32 width, u32 height, then 16-byte packed
  little-endian records (u64 t, u16 x, u16 y, u8 p, 3 pad bytes).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import DataError, EventFormatError, OrderingError

BINARY_MAGIC = b"EVT1"
_BINARY_RECORD = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1"), ("pad", "V3")]
)


class Event(NamedTuple):
    """Single DVS event: pixel column, pixel row, timestamp (us), polarity."""

    x: int
    y: int
    t: int
    p: int


@dataclass
class EventArray:
    """Columnar batch of events, sorted by timestamp.

    Cheap to slice and filter with numpy masks; the workhorse container for
    every pipeline stage.
    """

    x: np.ndarray = field(default_factory=lambda: np.empty(0, np.int32))
    y: np.ndarray = field(default_factory=lambda: np.empty(0, np.int32))
    t: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    p: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint8))

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self.t)):
            yield Event(int(self.x[i]), int(self.y[i]), int(self.t[i]), int(self.p[i]))

    def select(self, mask_or_idx) -> "EventArray":
        return EventArray(
            self.x[mask_or_idx], self.y[mask_or_idx],
            self.t[mask_or_idx], self.p[mask_or_idx],
        )

    @staticmethod
    def from_events(events: Iterable[Event]) -> "EventArray":
        rows = list(events)
        if not rows:
            return EventArray()
        x, y, t, p = zip(*rows)
        return EventArray(
            np.asarray(x, np.int32), np.asarray(y, np.int32),
            np.asarray(t, np.int64), np.asarray(p, np.uint8),
        )

    @staticmethod
    def concatenate(parts: Iterable["EventArray"]) -> "EventArray":
        parts = [a for a in parts if len(a)]
        if not parts:
            return EventArray()
        return EventArray(
            np.concatenate([a.x for a in parts]),
            np.concatenate([a.y for a in parts]),
            np.concatenate([a.t for a in parts]),
            np.concatenate([a.p for a in parts]),
        )


@dataclass
class EventBatch:
    """Events in one half-open time window [t_start, t_end)."""

    events: EventArray
    t_start: int
    t_end: int
    sensor_dims: tuple[int, int]

    def __post_init__(self):
        if self.t_end <= self.t_start:
            raise DataError(f"empty window: t_end {self.t_end} <= t_start {self.t_start}")

    def __len__(self) -> int:
        return len(self.events)


@dataclass
class Roi:
    """Inclusive pixel bounds plus the consecutive-miss counter of the tracker."""

    x_min: int
    x_max: int
    y_min: int
    y_max: int
    miss_count: int = 0

    def __post_init__(self):
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise DataError(f"degenerate ROI {self}")
        if not 0 <= self.miss_count <= 3:
            raise DataError(f"miss_count {self.miss_count} out of range")

    @staticmethod
    def full_sensor(sensor_dims: tuple[int, int]) -> "Roi":
        w, h = sensor_dims
        return Roi(0, w - 1, 0, h - 1, miss_count=0)


def _validate_event(x: int, y: int, t: int, p: int, sensor_dims, line_no=None) -> Event:
    w, h = sensor_dims
    if not 0 <= x < w:
        raise EventFormatError(f"x={x} outside [0, {w})", line_no)
    if not 0 <= y < h:
        raise EventFormatError(f"y={y} outside [0, {h})", line_no)
    if p not in (0, 1):
        raise EventFormatError(f"polarity {p} not in {{0, 1}}", line_no)
    return Event(x, y, t, p)


def read_events_csv(path, sensor_dims: tuple[int, int]) -> Iterator[Event]:
    """Yield events from a ``t,x,y,p`` CSV in file order.

    Rejects out-of-bounds coordinates and timestamp regressions; a header
    line is skipped if present.
    """
    last_t = None
    with open(path, "r") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if line_no == 1 and not parts[0].strip().lstrip("-").isdigit():
                continue  # header
            if len(parts) != 4:
                raise EventFormatError(f"expected 4 fields, got {len(parts)}", line_no)
            try:
                t, x, y, p = (int(v) for v in parts)
            except ValueError as exc:
                raise EventFormatError(str(exc), line_no) from exc
            if last_t is not None and t < last_t:
                raise OrderingError(f"line {line_no}: timestamp {t} < previous {last_t}")
            last_t = t
            yield _validate_event(x, y, t, p, sensor_dims, line_no)


def write_events_csv(path, events: Iterable[Event], header: bool = True) -> None:
    with open(path, "w") as fh:
        if header:
            fh.write("t,x,y,p\n")
        for ev in events:
            fh.write(f"{ev.t},{ev.x},{ev.y},{ev.p}\n")


def read_events_binary(path) -> tuple[EventArray, tuple[int, int]]:
    """Read the fixed-width binary format; returns (events, sensor_dims)."""
    raw = Path(path).read_bytes()
    if raw[:4] != BINARY_MAGIC:
        raise EventFormatError(f"bad magic {raw[:4]!r}, expected {BINARY_MAGIC!r}")
    width, height = struct.unpack_from("<II", raw, 4)
    body = raw[12:]
    if len(body) % _BINARY_RECORD.itemsize:
        raise EventFormatError("truncated record at end of file")
    rec = np.frombuffer(body, dtype=_BINARY_RECORD)
    t = rec["t"].astype(np.int64)
    if len(t) > 1 and np.any(np.diff(t) < 0):
        bad = int(np.argmax(np.diff(t) < 0)) + 1
        raise OrderingError(f"record {bad}: timestamp regression")
    arr = EventArray(rec["x"].astype(np.int32), rec["y"].astype(np.int32), t,
                     rec["p"].astype(np.uint8))
    if len(arr) and (arr.x.max() >= width or arr.y.max() >= height):
        raise EventFormatError("event coordinates outside sensor bounds")
    return arr, (width, height)


def write_events_binary(path, events: EventArray, sensor_dims: tuple[int, int]) -> None:
    rec = np.zeros(len(events), dtype=_BINARY_RECORD)
    rec["t"] = events.t.astype(np.uint64)
    rec["x"] = events.x.astype(np.uint16)
    rec["y"] = events.y.astype(np.uint16)
    rec["p"] = events.p.astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<II", *sensor_dims))
        fh.write(rec.tobytes())


def read_event_stream(path, sensor_dims: tuple[int, int]) -> Iterator[Event]:
    """Lazily read a CSV or binary event file, sniffing the format by magic."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == BINARY_MAGIC:
        arr, dims = read_events_binary(path)
        if dims != tuple(sensor_dims):
            raise DataError(f"file sensor dims {dims} != expected {tuple(sensor_dims)}")
        return iter(arr)
    return read_events_csv(path, sensor_dims)


def window_events(
    stream: Iterable[Event], dt_window: int, sensor_dims: tuple[int, int]
) -> Iterator[EventBatch]:
    """Partition a time-ordered stream into half-open windows [k*dt, (k+1)*dt).

    Empty windows between occupied ones are emitted as empty batches so that
    downstream trackers see real time passing.
    """
    if dt_window <= 0:
        raise DataError(f"dt_window must be positive, got {dt_window}")
    current: list[Event] = []
    k = None
    for ev in stream:
        ki = ev.t // dt_window
        if k is None:
            k = ki
        while ki > k:
            yield EventBatch(EventArray.from_events(current), int(k * dt_window),
                             int((k + 1) * dt_window), sensor_dims)
            current = []
            k += 1
        current.append(ev)
    if k is not None:
        yield EventBatch(EventArray.from_events(current), int(k * dt_window),
                         int((k + 1) * dt_window), sensor_dims)


def window_event_array(
    arr: EventArray, dt_window: int, sensor_dims: tuple[int, int]
) -> list[EventBatch]:
    """Bulk equivalent of window_events for an in-memory EventArray.

    Uses searchsorted on the (sorted) timestamp column; agrees with
    window_events batch for batch.
    """
    if dt_window <= 0:
        raise DataError(f"dt_window must be positive, got {dt_window}")
    if len(arr) == 0:
        return []
    k0 = int(arr.t[0]) // dt_window
    k1 = int(arr.t[-1]) // dt_window
    edges = np.arange(k0, k1 + 2, dtype=np.int64) * dt_window
    cuts = np.searchsorted(arr.t, edges)
    return [
        EventBatch(
            arr.select(slice(int(cuts[i]), int(cuts[i + 1]))),
            int(edges[i]), int(edges[i + 1]), sensor_dims,
        )
        for i in range(len(edges) - 1)
    ]


def clip_to_roi(batch: EventBatch, roi: Roi) -> EventBatch:
    """Keep exactly the events inside the ROI (bounds inclusive), order preserved."""
    ev = batch.events
    mask = (
        (ev.x >= roi.x_min) & (ev.x <= roi.x_max)
        & (ev.y >= roi.y_min) & (ev.y <= roi.y_max)
    )
    return EventBatch(ev.select(mask), batch.t_start, batch.t_end, batch.sensor_dims)
