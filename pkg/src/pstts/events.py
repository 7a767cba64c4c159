"""Event-stream data types, file ingestion, temporal segmentation and density binning.

Streams are stored columnar (one numpy array per field) so that million-event
inputs segment and bin in milliseconds; the `Event` record type is only a
convenience view for element access.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterator, Union

import numpy as np

__all__ = [
    "Event",
    "EventStream",
    "EventSegment",
    "DensitySequence",
    "EventFormatError",
    "GeometryError",
    "parse_events",
    "segment_stream",
    "bin_density",
    "write_csv",
    "write_binary",
]

BINARY_MAGIC = b"EVS1"
# little-endian (u64 t, u16 x, u16 y, i8 p), packed to 13 bytes
BINARY_RECORD = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "<i1")])

_CSV_HEADER = re.compile(r"^#\s*W=(\d+)\s+H=(\d+)\s*$")


class EventFormatError(ValueError):
    """Malformed record in an event file; carries the 1-based line/record number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class GeometryError(ValueError):
    """Event coordinate outside the declared sensor geometry."""


@dataclass(frozen=True)
class Event:
    """A single camera event: pixel (x, y), timestamp t in microseconds, polarity +-1."""

    x: int
    y: int
    t: int
    p: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise GeometryError(f"negative coordinate ({self.x}, {self.y})")
        if self.t < 0:
            raise ValueError(f"negative timestamp {self.t}")
        if self.p not in (-1, 1):
            raise ValueError(f"polarity must be -1 or +1, got {self.p}")


def _validate_columns(
    t: np.ndarray, x: np.ndarray, y: np.ndarray, p: np.ndarray, width: int, height: int
) -> None:
    if not (len(t) == len(x) == len(y) == len(p)):
        raise ValueError("event columns have mismatching lengths")
    if len(t) == 0:
        return
    if t.min() < 0:
        raise ValueError("negative timestamp in event stream")
    bad = (x < 0) | (x >= width) | (y < 0) | (y >= height)
    if bad.any():
        i = int(np.argmax(bad))
        raise GeometryError(
            f"event {i} at ({int(x[i])}, {int(y[i])}) outside {width}x{height} sensor"
        )
    if not np.isin(p, (-1, 1)).all():
        i = int(np.argmax(~np.isin(p, (-1, 1))))
        raise ValueError(f"event {i} has polarity {int(p[i])}, expected -1 or +1")


@dataclass(frozen=True)
class EventStream:
    """Time-ordered event recording with its sensor geometry and time extent.

    `t_start`/`t_end` default to the first/last timestamp (0 for an empty
    stream) but may be widened explicitly, e.g. to anchor frame windows at 0.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    width: int
    height: int
    t_start: int = field(default=-1)
    t_end: int = field(default=-1)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise GeometryError(f"invalid sensor geometry {self.width}x{self.height}")
        for name in ("t", "x", "y", "p"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        _validate_columns(self.t, self.x, self.y, self.p, self.width, self.height)
        if len(self.t) and np.any(np.diff(self.t) < 0):
            order = np.argsort(self.t, kind="stable")
            for name in ("t", "x", "y", "p"):
                object.__setattr__(self, name, getattr(self, name)[order])
        lo = int(self.t[0]) if len(self.t) else 0
        hi = int(self.t[-1]) if len(self.t) else 0
        if self.t_start < 0:
            object.__setattr__(self, "t_start", lo)
        if self.t_end < 0:
            object.__setattr__(self, "t_end", hi)
        if len(self.t) and (lo < self.t_start or hi > self.t_end):
            raise ValueError("event timestamps fall outside [t_start, t_end]")

    @classmethod
    def empty(cls, width: int, height: int) -> "EventStream":
        z = np.empty(0, dtype=np.int64)
        return cls(z, z, z, z, width, height, 0, 0)

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self.t)):
            yield Event(int(self.x[i]), int(self.y[i]), int(self.t[i]), int(self.p[i]))

    @property
    def events(self) -> list[Event]:
        return list(self)

    @property
    def duration(self) -> int:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class EventSegment:
    """Events of one frame window [t_start, t_start + duration); 1-based index."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    index: int
    t_start: int
    duration: int

    def __len__(self) -> int:
        return len(self.t)

    @property
    def t_end(self) -> int:
        return self.t_start + self.duration

    @property
    def events(self) -> list[Event]:
        return [
            Event(int(self.x[i]), int(self.y[i]), int(self.t[i]), int(self.p[i]))
            for i in range(len(self.t))
        ]


@dataclass(frozen=True)
class DensitySequence:
    """Per-pixel event counts over B equal-width temporal bins of one segment."""

    counts: np.ndarray  # (B, H, W) non-negative ints
    bin_duration: float  # microseconds

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 3:
            raise ValueError(f"counts must be (B, H, W), got shape {counts.shape}")
        if counts.size and counts.min() < 0:
            raise ValueError("negative count in density sequence")
        object.__setattr__(self, "counts", counts)

    @property
    def bins(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


SourceType = Union[str, Path, bytes, BinaryIO]


def _as_reader(source: SourceType) -> BinaryIO:
    if isinstance(source, (str, Path)):
        return open(source, "rb")
    if isinstance(source, bytes):
        return io.BytesIO(source)
    return source


def parse_events(
    source: SourceType,
    format: str = "csv",
    width: int | None = None,
    height: int | None = None,
) -> EventStream:
    """Parse a CSV or binary event file into a validated, time-sorted stream.

    CSV: optional first line "# W=<int> H=<int>", then one "t,x,y,p" row per
    event. Binary: magic "EVS1", little-endian u32 W, u32 H, u64 count, then
    count packed (u64 t, u16 x, u16 y, i8 p) records. A polarity of 0 is
    accepted on ingest and mapped to -1. Geometry from the file overrides the
    `width`/`height` arguments; one of the two must supply it.
    """
    reader = _as_reader(source)
    try:
        if format == "csv":
            return _parse_csv(reader, width, height)
        if format == "binary":
            return _parse_binary(reader)
        raise ValueError(f"unknown event format {format!r}")
    finally:
        if isinstance(source, (str, Path)):
            reader.close()


def _map_polarity(p: np.ndarray) -> np.ndarray:
    # 0 is the {0,1} DVS encoding for OFF; normalize to -1
    return np.where(p == 0, -1, p)


def _parse_csv(reader: BinaryIO, width: int | None, height: int | None) -> EventStream:
    rows_t, rows_x, rows_y, rows_p = [], [], [], []
    for lineno, raw in enumerate(reader, start=1):
        line = raw.decode("utf-8", errors="replace").strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _CSV_HEADER.match(line)
            if m:
                width, height = int(m.group(1)), int(m.group(2))
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise EventFormatError(f"expected 4 fields 't,x,y,p', got {len(parts)}", lineno)
        try:
            t, x, y, p = (int(v) for v in parts)
        except ValueError:
            raise EventFormatError(f"non-integer field in {line!r}", lineno) from None
        if p not in (-1, 0, 1):
            raise ValueError(f"line {lineno}: polarity {p} outside {{-1, 0, 1}}")
        rows_t.append(t)
        rows_x.append(x)
        rows_y.append(y)
        rows_p.append(p)
    if width is None or height is None:
        raise GeometryError("sensor geometry undeclared: no '# W=.. H=..' header and no override")
    t = np.asarray(rows_t, dtype=np.int64)
    x = np.asarray(rows_x, dtype=np.int64)
    y = np.asarray(rows_y, dtype=np.int64)
    p = _map_polarity(np.asarray(rows_p, dtype=np.int64))
    return EventStream(t, x, y, p, width, height)


def _parse_binary(reader: BinaryIO) -> EventStream:
    header = reader.read(20)
    if len(header) < 20 or header[:4] != BINARY_MAGIC:
        raise EventFormatError("missing or truncated EVS1 header")
    width = int(np.frombuffer(header, "<u4", count=1, offset=4)[0])
    height = int(np.frombuffer(header, "<u4", count=1, offset=8)[0])
    count = int(np.frombuffer(header, "<u8", count=1, offset=12)[0])
    body = reader.read(count * BINARY_RECORD.itemsize)
    if len(body) != count * BINARY_RECORD.itemsize:
        raise EventFormatError(
            f"expected {count} records, file holds {len(body) // BINARY_RECORD.itemsize}"
        )
    rec = np.frombuffer(body, dtype=BINARY_RECORD)
    p = _map_polarity(rec["p"].astype(np.int64))
    if not np.isin(p, (-1, 1)).all():
        i = int(np.argmax(~np.isin(p, (-1, 1))))
        raise ValueError(f"record {i} has polarity {int(rec['p'][i])} outside {{-1, 0, 1}}")
    return EventStream(
        rec["t"].astype(np.int64),
        rec["x"].astype(np.int64),
        rec["y"].astype(np.int64),
        p,
        width,
        height,
    )


def write_csv(stream: EventStream, path: str | Path) -> None:
    """Write a stream in the CSV event format, geometry header included."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# W={stream.width} H={stream.height}\n")
        for i in range(len(stream)):
            fh.write(f"{stream.t[i]},{stream.x[i]},{stream.y[i]},{stream.p[i]}\n")


def write_binary(stream: EventStream, path: str | Path) -> None:
    """Write a stream in the binary EVS1 event format."""
    rec = np.empty(len(stream), dtype=BINARY_RECORD)
    rec["t"] = stream.t
    rec["x"] = stream.x
    rec["y"] = stream.y
    rec["p"] = stream.p
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(np.asarray([stream.width, stream.height], "<u4").tobytes())
        fh.write(np.asarray([len(stream)], "<u8").tobytes())
        fh.write(rec.tobytes())


def segment_stream(stream: EventStream, interval: int) -> list[EventSegment]:
    """Split a stream into K = max(1, ceil(duration / interval)) frame windows.

    Window k covers [t_start + (k-1)*interval, t_start + k*interval), except
    the last window which is closed at t_end so no event is lost on the
    boundary. Empty windows are still emitted so downstream frame indexing
    stays uniform.
    """
    if interval <= 0:
        raise ValueError(f"interval must be positive, got {interval}")
    span = stream.t_end - stream.t_start
    k_total = max(1, -(-span // interval))
    edges = stream.t_start + interval * np.arange(1, k_total + 1, dtype=np.int64)
    cuts = np.searchsorted(stream.t, edges[:-1], side="left")
    bounds = np.concatenate(([0], cuts, [len(stream)]))
    segments = []
    for k in range(k_total):
        lo, hi = int(bounds[k]), int(bounds[k + 1])
        segments.append(
            EventSegment(
                t=stream.t[lo:hi],
                x=stream.x[lo:hi],
                y=stream.y[lo:hi],
                p=stream.p[lo:hi],
                index=k + 1,
                t_start=int(stream.t_start + k * interval),
                duration=interval,
            )
        )
    return segments


def bin_density(segment: EventSegment, bins: int, width: int, height: int) -> DensitySequence:
    """Accumulate a segment's events into a (B, H, W) count tensor.

    Bins are equal-width half-open sub-windows of the segment window; the final
    bin additionally includes the window's upper edge. Both polarities
    accumulate into the single channel.
    """
    if bins <= 0:
        raise ValueError(f"bin count must be positive, got {bins}")
    if segment.duration <= 0:
        raise ValueError(f"segment duration must be positive, got {segment.duration}")
    counts = np.zeros((bins, height, width), dtype=np.int64)
    if len(segment):
        # integer arithmetic keeps bin assignment exact; clip folds t == t_end
        # into the final bin
        b = (segment.t - segment.t_start) * bins // segment.duration
        b = np.minimum(b, bins - 1)
        flat = (b * height + segment.y) * width + segment.x
        counts = np.bincount(flat, minlength=bins * height * width).reshape(
            bins, height, width
        )
    return DensitySequence(counts, segment.duration / bins)
