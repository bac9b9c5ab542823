"""Classic-pcap reading and Ethernet/IP/transport frame decoding.

Scope is deliberately narrow: classic pcap only (the four canonical
magics), Ethernet link layer with optional 802.1Q tags, IPv4/IPv6, and
TCP/UDP transport parsing. Everything else degrades to a counted Skip
rather than an error, so a capture full of garbage still decodes to the
end. Protocol classification uses the IP protocol field only.
"""

import struct
import sys
from dataclasses import dataclass
from typing import Iterator, Optional

from .errors import TruncatedHeader, UnknownMagic

# classic pcap magics: (byte-swapped?, nanosecond?) keyed by the raw prefix
_MAGICS = {
    b"\xa1\xb2\xc3\xd4": (">", False),
    b"\xd4\xc3\xb2\xa1": ("<", False),
    b"\xa1\xb2\x3c\x4d": (">", True),
    b"\x4d\x3c\xb2\xa1": ("<", True),
}

LINKTYPE_ETHERNET = 1

# TCP flag bit masks (low byte of the TCP offset/flags word)
FIN = 0x01
SYN = 0x02
RST = 0x04
PSH = 0x08
ACK = 0x10
URG = 0x20
ECE = 0x40
CWR = 0x80

_ETH_IPV4 = 0x0800
_ETH_IPV6 = 0x86DD
_ETH_VLAN = 0x8100

# IPv6 extension headers that carry a (next_header, length) chain.
# ESP (50) is deliberately absent: its body is encrypted, so it decodes
# as the final protocol instead.
_IPV6_EXT = {0, 43, 44, 51, 60, 135}
_IPV6_EXT_LIMIT = 8


@dataclass(frozen=True)
class CaptureHeader:
    byte_order: str  # "native" or "swapped" relative to the host
    timestamp_unit: str  # "microsecond" or "nanosecond"
    link_type: int
    snap_len: int


@dataclass(frozen=True)
class RawFrame:
    ts: float
    data: bytes
    orig_len: int


@dataclass(frozen=True)
class PacketRecord:
    ts: float  # seconds since epoch
    src_ip: bytes  # packed, 4 or 16 bytes
    dst_ip: bytes
    src_port: int  # 0 for portless protocols
    dst_port: int
    ip_protocol: int
    total_len_bytes: int  # on-wire IP length (header total-length field)
    payload_len_bytes: int
    header_len_bytes: int  # IP header + transport header
    tcp_flags: int  # FIN|SYN|RST|PSH|ACK|URG|ECE|CWR bitmask, 0 if not TCP
    tcp_window: int  # 0 if not TCP

    def flag(self, mask: int) -> bool:
        return bool(self.tcp_flags & mask)


@dataclass(frozen=True)
class Skip:
    """A frame that did not decode to an IP packet, with the reason."""

    reason: str  # non_ip | malformed | fragment | unsupported_link


class CaptureReader:
    """Sequential reader over one classic pcap file.

    Iterating yields RawFrame values. `truncated_tail` is set if the file
    ends mid-record; the partial record is dropped.
    """

    def __init__(self, path):
        self._f = open(path, "rb")
        head = self._f.read(24)
        if len(head) < 24:
            self._f.close()
            raise TruncatedHeader(f"{path}: global header needs 24 bytes, got {len(head)}")
        key = _MAGICS.get(head[:4])
        if key is None:
            self._f.close()
            raise UnknownMagic(f"{path}: magic {head[:4].hex()} is not classic pcap")
        self._order, nano = key
        file_le = self._order == "<"
        host_le = sys.byteorder == "little"
        _, _, _, _, snap_len, link_type = struct.unpack(self._order + "HHiIII", head[4:])
        if snap_len == 0:
            self._f.close()
            raise TruncatedHeader(f"{path}: snap_len 0 in global header")
        self.header = CaptureHeader(
            byte_order="native" if file_le == host_le else "swapped",
            timestamp_unit="nanosecond" if nano else "microsecond",
            link_type=link_type,
            snap_len=snap_len,
        )
        self._ts_scale = 1e-9 if nano else 1e-6
        self.truncated_tail = False

    def __iter__(self) -> Iterator[RawFrame]:
        rec = struct.Struct(self._order + "IIII")
        read = self._f.read
        while True:
            head = read(16)
            if not head:
                break
            if len(head) < 16:
                self.truncated_tail = True
                break
            ts_sec, ts_frac, incl_len, orig_len = rec.unpack(head)
            data = read(incl_len)
            if len(data) < incl_len:
                self.truncated_tail = True
                break
            yield RawFrame(ts_sec + ts_frac * self._ts_scale, data, orig_len)
        self._f.close()

    def close(self):
        self._f.close()


def open_capture(path):
    """Open a classic pcap file; returns (CaptureHeader, frame iterator)."""
    reader = CaptureReader(path)
    return reader.header, iter(reader)


def decode_frame(raw: bytes, link_type: int = LINKTYPE_ETHERNET, ts: float = 0.0):
    """Decode one captured frame into a PacketRecord or a Skip.

    Never raises on arbitrary bytes. Truncated captures are parsed from
    the captured prefix, but total_len_bytes always reflects the IP
    total-length field (features measure on-wire sizes).
    """
    if link_type != LINKTYPE_ETHERNET:
        return Skip("unsupported_link")
    if len(raw) < 14:
        return Skip("malformed")
    ethertype = (raw[12] << 8) | raw[13]
    offset = 14
    while ethertype == _ETH_VLAN:
        if len(raw) < offset + 4:
            return Skip("malformed")
        ethertype = (raw[offset + 2] << 8) | raw[offset + 3]
        offset += 4
    if ethertype == _ETH_IPV4:
        return _decode_ipv4(raw, offset, ts)
    if ethertype == _ETH_IPV6:
        return _decode_ipv6(raw, offset, ts)
    return Skip("non_ip")


def _decode_ipv4(raw: bytes, off: int, ts: float):
    if len(raw) < off + 20:
        return Skip("malformed")
    vihl = raw[off]
    if vihl >> 4 != 4:
        return Skip("malformed")
    ihl = (vihl & 0x0F) * 4
    if ihl < 20 or len(raw) < off + ihl:
        return Skip("malformed")
    total_len = (raw[off + 2] << 8) | raw[off + 3]
    if total_len < ihl:
        return Skip("malformed")
    frag_word = (raw[off + 6] << 8) | raw[off + 7]
    if frag_word & 0x1FFF:  # non-first fragment
        return Skip("fragment")
    protocol = raw[off + 9]
    src = raw[off + 12 : off + 16]
    dst = raw[off + 16 : off + 20]
    return _decode_transport(raw, off + ihl, ts, src, dst, protocol, total_len, ihl)


def _decode_ipv6(raw: bytes, off: int, ts: float):
    if len(raw) < off + 40:
        return Skip("malformed")
    if raw[off] >> 4 != 6:
        return Skip("malformed")
    payload_len = (raw[off + 4] << 8) | raw[off + 5]
    nxt = raw[off + 6]
    src = raw[off + 8 : off + 24]
    dst = raw[off + 24 : off + 40]
    total_len = 40 + payload_len
    pos = off + 40
    ip_hdr_len = 40
    hops = 0
    while nxt in _IPV6_EXT:
        hops += 1
        if hops > _IPV6_EXT_LIMIT or len(raw) < pos + 8:
            return Skip("malformed")
        if nxt == 44:  # fragment header
            frag_off = ((raw[pos + 2] << 8) | raw[pos + 3]) >> 3
            if frag_off:
                return Skip("fragment")
            ext_len = 8
        elif nxt == 51:  # AH counts in 4-byte units
            ext_len = (raw[pos + 1] + 2) * 4
        else:
            ext_len = (raw[pos + 1] + 1) * 8
        nxt = raw[pos]
        pos += ext_len
        ip_hdr_len += ext_len
        if len(raw) < pos:
            return Skip("malformed")
    return _decode_transport(raw, pos, ts, src, dst, nxt, total_len, ip_hdr_len)


def _decode_transport(raw, pos, ts, src, dst, protocol, total_len, ip_hdr_len):
    src_port = dst_port = 0
    tcp_flags = 0
    tcp_window = 0
    if protocol == 6:  # TCP
        if len(raw) < pos + 20:
            return Skip("malformed")
        src_port = (raw[pos] << 8) | raw[pos + 1]
        dst_port = (raw[pos + 2] << 8) | raw[pos + 3]
        data_off = (raw[pos + 12] >> 4) * 4
        if data_off < 20:
            return Skip("malformed")
        tcp_flags = raw[pos + 13]
        tcp_window = (raw[pos + 14] << 8) | raw[pos + 15]
        transport_hdr = data_off
    elif protocol == 17:  # UDP
        if len(raw) < pos + 8:
            return Skip("malformed")
        src_port = (raw[pos] << 8) | raw[pos + 1]
        dst_port = (raw[pos + 2] << 8) | raw[pos + 3]
        transport_hdr = 8
    else:
        transport_hdr = 0
    header_len = ip_hdr_len + transport_hdr
    payload_len = total_len - header_len
    if payload_len < 0:
        return Skip("malformed")
    return PacketRecord(
        ts=ts,
        src_ip=bytes(src),
        dst_ip=bytes(dst),
        src_port=src_port,
        dst_port=dst_port,
        ip_protocol=protocol,
        total_len_bytes=total_len,
        payload_len_bytes=payload_len,
        header_len_bytes=header_len,
        tcp_flags=tcp_flags,
        tcp_window=tcp_window,
    )


@dataclass
class DecodeStats:
    packets: int = 0
    skips: Optional[dict] = None

    def __post_init__(self):
        if self.skips is None:
            self.skips = {}

    def count_skip(self, reason: str):
        self.skips[reason] = self.skips.get(reason, 0) + 1


def read_packets(path, stats: Optional[DecodeStats] = None) -> Iterator[PacketRecord]:
    """Decode a capture file into PacketRecords, counting skipped frames."""
    header, frames = open_capture(path)
    for frame in frames:
        out = decode_frame(frame.data, header.link_type, frame.ts)
        if isinstance(out, PacketRecord):
            if stats is not None:
                stats.packets += 1
            yield out
        elif stats is not None:
            stats.count_skip(out.reason)
