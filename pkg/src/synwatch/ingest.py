"""Turn packet-level inputs into per-interval SYN counts.

Supported inputs:

* classic pcap (magic ``0xA1B2C3D4`` either byte order, microsecond
  timestamps, linktype 1 = Ethernet); pcapng and nanosecond variants are
  rejected, not guessed at
* CSV packet logs, header ``timestamp,src_ip,src_port,dst_ip,dst_port,flags``
* CSV count logs, header ``index,syn_count`` (an optional third ``label``
  column is tolerated and returned separately)

Only connection-initiating segments count as SYNs: SYN set and ACK clear.
A SYN/ACK is the victim's own reply and would double-count the handshake.
"""

from __future__ import annotations

import ipaddress
import math
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator, Literal, Optional, TextIO

from .detector import IntervalSample
from .errors import FormatError, TruncationError, UnsupportedFormatError

FIN = 0x01
SYN = 0x02
RST = 0x04
PSH = 0x08
ACK = 0x10
URG = 0x20

_FLAG_LETTERS = {"F": FIN, "S": SYN, "R": RST, "P": PSH, "A": ACK, "U": URG}

MAGIC_USEC = 0xA1B2C3D4
MAGIC_USEC_SWAPPED = 0xD4C3B2A1
_MAGIC_NSEC = {0xA1B23C4D, 0x4D3CB2A1}
_MAGIC_PCAPNG = 0x0A0D0D0A

_ETHERTYPE_IPV4 = 0x0800
_ETHERTYPE_VLAN = {0x8100, 0x88A8}
_ETHERTYPE_IPV6 = 0x86DD

_CSV_PACKET_HEADER = "timestamp,src_ip,src_port,dst_ip,dst_port,flags"
_CSV_COUNT_HEADERS = ("index,syn_count", "index,syn_count,label")

TraceFormat = Literal["pcap", "csv-packets", "csv-counts"]


@dataclass(frozen=True)
class PacketRecord:
    """One observed packet: timestamp, addresses, and the raw TCP flag byte."""

    timestamp: float
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    tcp_flags: int


@dataclass
class ParseStats:
    """Counters for tolerated oddities; attach one to a parser to inspect them."""

    skipped_non_ipv4: int = 0
    skipped_non_tcp: int = 0
    skipped_short: int = 0
    out_of_order: int = 0
    before_origin: int = 0
    line_errors: list = field(default_factory=list)  # (line_number, message)


def is_syn(record: PacketRecord) -> bool:
    """True for a connection-initiating segment: SYN set, ACK clear."""
    return (record.tcp_flags & (SYN | ACK)) == SYN


def sniff_format(head: bytes) -> TraceFormat:
    """Guess the input format from its first bytes, never from a filename."""
    if len(head) >= 4:
        magic_be = struct.unpack(">I", head[:4])[0]
        if magic_be in (MAGIC_USEC, MAGIC_USEC_SWAPPED) or magic_be in _MAGIC_NSEC \
                or magic_be == _MAGIC_PCAPNG:
            return "pcap"
    try:
        first_line = head.decode("utf-8", errors="strict").splitlines()[0]
    except (UnicodeDecodeError, IndexError):
        raise FormatError("cannot determine input format from content")
    header = first_line.strip().lower()
    if header == _CSV_PACKET_HEADER:
        return "csv-packets"
    if header in _CSV_COUNT_HEADERS:
        return "csv-counts"
    raise FormatError(f"cannot determine input format from header line {first_line!r}")


def parse_pcap(stream: BinaryIO, stats: Optional[ParseStats] = None) -> Iterator[PacketRecord]:
    """Yield one record per Ethernet/IPv4/TCP frame in a classic pcap stream.

    Non-IPv4 and non-TCP frames are counted in ``stats`` and skipped; IPv6,
    VLAN-tagged frames, pcapng, and nanosecond pcap raise
    :class:`UnsupportedFormatError` because silently dropping them could hide
    real SYNs from the detector.
    """
    if stats is None:
        stats = ParseStats()
    header = stream.read(24)
    if len(header) < 4:
        raise FormatError("not a pcap file: missing global header")
    magic_be = struct.unpack(">I", header[:4])[0]
    if magic_be == MAGIC_USEC:
        endian = ">"
    elif magic_be == MAGIC_USEC_SWAPPED:
        endian = "<"
    elif magic_be in _MAGIC_NSEC:
        raise UnsupportedFormatError("nanosecond pcap is not supported")
    elif magic_be == _MAGIC_PCAPNG:
        raise UnsupportedFormatError("pcapng is not supported; convert to classic pcap")
    else:
        raise FormatError(f"not a pcap file: bad magic 0x{magic_be:08X}")
    if len(header) < 24:
        raise TruncationError("truncated pcap global header", len(header))
    linktype = struct.unpack(endian + "I", header[20:24])[0]
    if linktype != 1:
        raise UnsupportedFormatError(f"linktype {linktype} is not supported (Ethernet only)")

    offset = 24
    prev_ts = -math.inf
    while True:
        rec_header = stream.read(16)
        if len(rec_header) == 0:
            return
        if len(rec_header) < 16:
            raise TruncationError("truncated pcap record header", offset)
        ts_sec, ts_usec, incl_len, _orig_len = struct.unpack(endian + "IIII", rec_header)
        offset += 16
        frame = stream.read(incl_len)
        if len(frame) < incl_len:
            raise TruncationError(
                f"truncated pcap record: expected {incl_len} bytes, got {len(frame)}",
                offset)
        offset += incl_len

        record = _decode_ethernet_frame(frame, ts_sec + ts_usec * 1e-6, stats)
        if record is None:
            continue
        if record.timestamp < prev_ts:
            stats.out_of_order += 1
        prev_ts = max(prev_ts, record.timestamp)
        yield record


def _decode_ethernet_frame(frame: bytes, timestamp: float,
                           stats: ParseStats) -> Optional[PacketRecord]:
    if len(frame) < 14:
        stats.skipped_short += 1
        return None
    ethertype = struct.unpack(">H", frame[12:14])[0]
    if ethertype in _ETHERTYPE_VLAN:
        raise UnsupportedFormatError("VLAN-tagged frames are not supported")
    if ethertype == _ETHERTYPE_IPV6:
        raise UnsupportedFormatError("IPv6 is not supported")
    if ethertype != _ETHERTYPE_IPV4:
        stats.skipped_non_ipv4 += 1
        return None

    ip = frame[14:]
    if len(ip) < 20:
        stats.skipped_short += 1
        return None
    version = ip[0] >> 4
    ihl = (ip[0] & 0x0F) * 4
    if version != 4 or ihl < 20 or len(ip) < ihl:
        stats.skipped_short += 1
        return None
    protocol = ip[9]
    if protocol != 6:
        stats.skipped_non_tcp += 1
        return None

    tcp = ip[ihl:]
    # Need the fixed TCP header through the flags byte (offset 13).
    if len(tcp) < 14:
        stats.skipped_short += 1
        return None
    src_port, dst_port = struct.unpack(">HH", tcp[0:4])
    flags = tcp[13]
    return PacketRecord(
        timestamp=timestamp,
        src_ip=".".join(str(b) for b in ip[12:16]),
        dst_ip=".".join(str(b) for b in ip[16:20]),
        src_port=src_port,
        dst_port=dst_port,
        tcp_flags=flags,
    )


def write_pcap(stream: BinaryIO, records: Iterable[PacketRecord],
               byte_order: Literal["<", ">"] = "<") -> None:
    """Write records as a classic pcap with synthetic Ethernet/IPv4/TCP frames.

    Meant for fixtures and tests; timestamps are rounded to microseconds.
    """
    stream.write(struct.pack(byte_order + "IHHiIII",
                             MAGIC_USEC, 2, 4, 0, 0, 65535, 1))
    for rec in records:
        frame = _encode_frame(rec)
        ts_sec = int(rec.timestamp)
        ts_usec = int(round((rec.timestamp - ts_sec) * 1e6))
        if ts_usec >= 1_000_000:
            ts_sec += 1
            ts_usec -= 1_000_000
        stream.write(struct.pack(byte_order + "IIII",
                                 ts_sec, ts_usec, len(frame), len(frame)))
        stream.write(frame)


def _encode_frame(rec: PacketRecord) -> bytes:
    eth = b"\x02\x00\x00\x00\x00\x01" + b"\x02\x00\x00\x00\x00\x02" + b"\x08\x00"
    src = ipaddress.IPv4Address(rec.src_ip).packed
    dst = ipaddress.IPv4Address(rec.dst_ip).packed
    tcp = struct.pack(">HHIIBBHHH",
                      rec.src_port, rec.dst_port, 0, 0,
                      5 << 4, rec.tcp_flags & 0xFF, 65535, 0, 0)
    total_len = 20 + len(tcp)
    ip_no_cksum = struct.pack(">BBHHHBBH", 0x45, 0, total_len, 0, 0, 64, 6, 0) + src + dst
    cksum = _ipv4_checksum(ip_no_cksum)
    ip = ip_no_cksum[:10] + struct.pack(">H", cksum) + ip_no_cksum[12:]
    return eth + ip + tcp


def _ipv4_checksum(header: bytes) -> int:
    total = 0
    for i in range(0, len(header), 2):
        total += (header[i] << 8) | header[i + 1]
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def parse_csv_packets(stream: TextIO, stats: Optional[ParseStats] = None,
                      error_budget: int = 100) -> Iterator[PacketRecord]:
    """Yield records from a CSV packet log.

    Malformed lines are collected into ``stats.line_errors`` with their line
    numbers; after ``error_budget`` bad lines parsing aborts with
    :class:`FormatError`.
    """
    if stats is None:
        stats = ParseStats()
    header = stream.readline()
    if header == "" or header.strip().lower() != _CSV_PACKET_HEADER:
        raise FormatError(
            f"missing or wrong CSV header; expected {_CSV_PACKET_HEADER!r}")
    for lineno, line in enumerate(stream, start=2):
        line = line.strip()
        if not line:
            continue
        try:
            yield _parse_packet_line(line)
        except ValueError as exc:
            stats.line_errors.append((lineno, str(exc)))
            if len(stats.line_errors) >= error_budget:
                raise FormatError(
                    f"aborting after {error_budget} malformed lines "
                    f"(last: line {lineno}: {exc})")


def _parse_packet_line(line: str) -> PacketRecord:
    parts = line.split(",")
    if len(parts) != 6:
        raise ValueError(f"expected 6 fields, got {len(parts)}")
    raw_ts, src_ip, src_port, dst_ip, dst_port, flags = (p.strip() for p in parts)
    ts = float(raw_ts)
    if not math.isfinite(ts) or ts < 0:
        raise ValueError(f"bad timestamp {raw_ts!r}")
    return PacketRecord(
        timestamp=ts,
        src_ip=str(ipaddress.IPv4Address(src_ip)),
        dst_ip=str(ipaddress.IPv4Address(dst_ip)),
        src_port=_parse_port(src_port),
        dst_port=_parse_port(dst_port),
        tcp_flags=_parse_flags(flags),
    )


def _parse_port(text: str) -> int:
    port = int(text)
    if not 0 <= port <= 0xFFFF:
        raise ValueError(f"port {port} out of range")
    return port


def _parse_flags(text: str) -> int:
    """Flags as hex ("0x12") or letter set ("SA")."""
    text = text.strip()
    if text.lower().startswith("0x"):
        value = int(text, 16)
        if not 0 <= value <= 0xFF:
            raise ValueError(f"flag byte {text!r} out of range")
        return value
    value = 0
    for letter in text.upper():
        bit = _FLAG_LETTERS.get(letter)
        if bit is None:
            raise ValueError(f"unknown flag letter {letter!r} in {text!r}")
        value |= bit
    if value == 0:
        raise ValueError(f"empty flag set {text!r}")
    return value


def read_csv_counts(stream: TextIO, interval_len: float = 1.0,
                    error_budget: int = 100
                    ) -> tuple[list[IntervalSample], Optional[list[bool]]]:
    """Read a pre-aggregated count log; returns (samples, labels or None).

    Indices must be non-decreasing; gaps are filled with zero-count intervals
    so the output is contiguous from 0.
    """
    header = stream.readline()
    if header == "":
        raise FormatError("empty count log")
    cols = header.strip().lower()
    if cols not in _CSV_COUNT_HEADERS:
        raise FormatError(
            f"missing or wrong CSV header; expected 'index,syn_count[,label]', got {cols!r}")
    has_label = cols == _CSV_COUNT_HEADERS[1]

    samples: list[IntervalSample] = []
    labels: list[bool] = []
    errors: list[tuple[int, str]] = []
    next_index = 0
    for lineno, line in enumerate(stream, start=2):
        line = line.strip()
        if not line:
            continue
        try:
            parts = line.split(",")
            expected = 3 if has_label else 2
            if len(parts) != expected:
                raise ValueError(f"expected {expected} fields, got {len(parts)}")
            index = int(parts[0])
            count = int(parts[1])
            if index < next_index:
                raise ValueError(f"index {index} out of order")
            if count < 0:
                raise ValueError(f"negative syn_count {count}")
            label = bool(int(parts[2])) if has_label else False
        except ValueError as exc:
            errors.append((lineno, str(exc)))
            if len(errors) >= error_budget:
                raise FormatError(
                    f"aborting after {error_budget} malformed lines "
                    f"(last: line {lineno}: {exc})")
            continue
        while next_index < index:
            samples.append(IntervalSample(next_index, next_index * interval_len, 0))
            labels.append(False)
            next_index += 1
        samples.append(IntervalSample(index, index * interval_len, count))
        labels.append(label)
        next_index = index + 1
    return samples, (labels if has_label else None)


def bin_intervals(packets: Iterable[PacketRecord], interval_len: float,
                  origin: Optional[float] = None, duration: Optional[float] = None,
                  stats: Optional[ParseStats] = None) -> list[IntervalSample]:
    """Count SYN packets per fixed-length interval.

    Interval ``k`` covers ``[origin + k*interval_len, origin + (k+1)*interval_len)``.
    The origin defaults to the first packet's timestamp floored to a whole
    interval. Counts depend only on timestamps, so arrival order does not
    matter; packets before the origin are skipped and counted in ``stats``.
    ``duration`` forces at least ``ceil(duration / interval_len)`` intervals,
    which is how an empty capture of known length yields all-zero counts.
    """
    if not interval_len > 0:
        raise ValueError(f"interval_len must be > 0, got {interval_len}")
    if stats is None:
        stats = ParseStats()

    counts: dict[int, int] = {}
    max_index = -1
    first_ts: Optional[float] = None
    for pkt in packets:
        if first_ts is None:
            first_ts = pkt.timestamp
            if origin is None:
                origin = math.floor(first_ts / interval_len) * interval_len
        index = math.floor((pkt.timestamp - origin) / interval_len)
        if index < 0:
            stats.before_origin += 1
            continue
        max_index = max(max_index, index)
        if is_syn(pkt):
            counts[index] = counts.get(index, 0) + 1

    if origin is None:
        origin = 0.0
    if duration is not None:
        max_index = max(max_index, math.ceil(duration / interval_len) - 1)
    return [
        IntervalSample(index=k, start_time=origin + k * interval_len,
                       syn_count=counts.get(k, 0))
        for k in range(max_index + 1)
    ]
