"""Binary and CSV serialization of click streams.

IONCLK1 layout, little-endian throughout:

    header:  7s  magic   b"IONCLK1"
             u32 channel id
             u64 event count
             u64 duration in picoseconds
    events:  u64 timestamp_ps, u8 polarization, u8 wavelength
             (packed, 10 bytes per event)

Polarization codes 0/1/2 = sigma-/pi/sigma+; wavelength 0/1 = 397/866 nm.
The CSV mirror holds the same fields in plain text for inspection.
"""

from __future__ import annotations

import csv
import struct

import numpy as np

from . import atom
from .trajectory import ClickStream

MAGIC = b"IONCLK1"
_HEADER = struct.Struct("<7sIQQ")
_EVENT_DTYPE = np.dtype([("ts", "<u8"), ("pol", "u1"), ("wl", "u1")])


class StreamFormatError(ValueError):
    """The file is not a well-formed IONCLK1 stream."""


def write_stream(path, stream: ClickStream) -> None:
    events = np.empty(len(stream), dtype=_EVENT_DTYPE)
    events["ts"] = stream.timestamps_ps
    events["pol"] = stream.pol
    events["wl"] = stream.wavelength
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, stream.channel, len(stream),
                              stream.duration_ps))
        fh.write(events.tobytes())


def read_stream(path) -> ClickStream:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise StreamFormatError(f"{path}: truncated header")
        magic, channel, count, duration_ps = _HEADER.unpack(head)
        if magic != MAGIC:
            raise StreamFormatError(f"{path}: bad magic {magic!r}")
        payload = fh.read()
    expected = count * _EVENT_DTYPE.itemsize
    if len(payload) != expected:
        raise StreamFormatError(
            f"{path}: payload is {len(payload)} bytes, header promises {expected}")
    events = np.frombuffer(payload, dtype=_EVENT_DTYPE)
    ts = events["ts"].astype(np.int64)
    try:
        return ClickStream(
            timestamps_ps=ts,
            pol=events["pol"].copy(),
            wavelength=events["wl"].copy(),
            duration_ps=int(duration_ps),
            channel=int(channel),
            meta={"path": str(path)})
    except ValueError as exc:
        raise StreamFormatError(f"{path}: {exc}") from None


def write_stream_csv(path, stream: ClickStream) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# channel = {stream.channel}\n")
        fh.write(f"# duration_ps = {stream.duration_ps}\n")
        writer = csv.writer(fh)
        writer.writerow(["timestamp_ps", "pol", "wavelength"])
        for ts, pol, wl in zip(stream.timestamps_ps, stream.pol,
                               stream.wavelength):
            writer.writerow([int(ts), atom.POL_NAMES[int(pol)],
                             atom.WL_NAMES[int(wl)]])


def read_stream_csv(path) -> ClickStream:
    channel = 0
    duration_ps = None
    ts, pol, wl = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        header_seen = False
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                key, _, val = body.partition("=")
                key = key.strip()
                if key == "channel":
                    channel = int(val)
                elif key == "duration_ps":
                    duration_ps = int(val)
                continue
            cells = next(csv.reader([line]))
            if not header_seen:
                if cells != ["timestamp_ps", "pol", "wavelength"]:
                    raise StreamFormatError(f"{path}: unexpected header {cells}")
                header_seen = True
                continue
            try:
                ts.append(int(cells[0]))
                pol.append(atom.POL_TAGS[cells[1].strip()])
                wl.append(atom.WL_TAGS[cells[2].strip()])
            except (ValueError, IndexError, KeyError):
                raise StreamFormatError(f"{path}: bad row {cells}") from None
    if not header_seen:
        raise StreamFormatError(f"{path}: no header row")
    if duration_ps is None:
        duration_ps = (ts[-1] + 1) if ts else 1
    try:
        return ClickStream(timestamps_ps=np.array(ts, dtype=np.int64),
                           pol=np.array(pol, dtype=np.uint8),
                           wavelength=np.array(wl, dtype=np.uint8),
                           duration_ps=duration_ps, channel=channel,
                           meta={"path": str(path)})
    except ValueError as exc:
        raise StreamFormatError(f"{path}: {exc}") from None


def load_stream(path) -> ClickStream:
    """Dispatch on suffix: .csv text mirror, anything else binary."""
    if str(path).endswith(".csv"):
        return read_stream_csv(path)
    return read_stream(path)


def save_stream(path, stream: ClickStream) -> None:
    """Mirror of load_stream, suffix picks the format."""
    if str(path).endswith(".csv"):
        write_stream_csv(path, stream)
    else:
        write_stream(path, stream)
