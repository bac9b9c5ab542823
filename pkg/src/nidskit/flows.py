"""Bidirectional flow assembly keyed by canonical 5-tuple.

Termination is explicit and testable. A flow ends by:

  fin           both directions sent FIN and the exchange completed
  rst           an RST was observed (the RST packet belongs to the flow)
  idle_timeout  the gap to the next same-key packet exceeded idle_timeout;
                the new packet starts a fresh flow
  hard_timeout  flow age exceeded hard_timeout (disabled by default)
  end_of_capture  still live when the table was flushed

FIN handling: once FIN has been seen in both directions the flow enters a
closing state; a subsequent pure ACK (ACK only, no payload) is absorbed
and closes the flow, while any other packet for the key closes the old
flow as-is and starts a new one. This keeps the whole 4-way
FIN/ACK/FIN/ACK exchange inside one flow, and makes a SYN or a trailing
retransmission after close start a fresh flow.
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

from .pcap import ACK, FIN, PSH, RST, SYN, URG, PacketRecord

REORDER_TOLERANCE = 1e-3  # timestamp regressions beyond this are clamped

Endpoint = Tuple[bytes, int]


@dataclass(frozen=True, order=True)
class FlowKey:
    endpoint_lo: Endpoint
    endpoint_hi: Endpoint
    ip_protocol: int


def canonical_key(pkt: PacketRecord) -> FlowKey:
    """Direction-insensitive key: endpoints ordered by (ip bytes, port)."""
    a = (pkt.src_ip, pkt.src_port)
    b = (pkt.dst_ip, pkt.dst_port)
    if a <= b:
        return FlowKey(a, b, pkt.ip_protocol)
    return FlowKey(b, a, pkt.ip_protocol)


@dataclass
class FlowState:
    key: FlowKey
    forward_initiator: Endpoint
    first_ts: float
    last_ts: float
    fwd_packets: List[PacketRecord] = field(default_factory=list)
    bwd_packets: List[PacketRecord] = field(default_factory=list)
    packets: List[Tuple[PacketRecord, bool]] = field(default_factory=list)  # (pkt, is_fwd)
    fin_fwd: bool = False
    fin_bwd: bool = False
    closing: bool = False
    terminated_by: Optional[str] = None
    clamped_regressions: int = 0

    @property
    def packet_count(self) -> int:
        return len(self.packets)

    def _append(self, pkt: PacketRecord, is_fwd: bool):
        if pkt.ts < self.last_ts - REORDER_TOLERANCE:
            pkt = replace(pkt, ts=self.last_ts)
            self.clamped_regressions += 1
        (self.fwd_packets if is_fwd else self.bwd_packets).append(pkt)
        self.packets.append((pkt, is_fwd))
        if pkt.ts > self.last_ts:
            self.last_ts = pkt.ts


def _is_pure_ack(pkt: PacketRecord) -> bool:
    if not pkt.flag(ACK) or pkt.payload_len_bytes > 0:
        return False
    return not (pkt.tcp_flags & (FIN | SYN | RST | PSH | URG))


class FlowTable:
    """Groups packets from one capture, fed in file order, into flows.

    idle_timeout and hard_timeout are seconds; hard_timeout=None disables
    the age cap. The choice of idle_timeout changes feature values, so it
    is surfaced everywhere a capture is processed.
    """

    def __init__(self, idle_timeout: float = 120.0, hard_timeout: Optional[float] = None):
        self.idle_timeout = idle_timeout
        self.hard_timeout = hard_timeout
        self._live: dict = {}
        self.regressions = 0

    def _terminate(self, flow: FlowState, reason: str) -> FlowState:
        flow.terminated_by = reason
        self.regressions += flow.clamped_regressions
        return flow

    def _start(self, key: FlowKey, pkt: PacketRecord) -> FlowState:
        flow = FlowState(
            key=key,
            forward_initiator=(pkt.src_ip, pkt.src_port),
            first_ts=pkt.ts,
            last_ts=pkt.ts,
        )
        flow._append(pkt, True)
        self._live[key] = flow
        return flow

    def ingest(self, pkt: PacketRecord) -> List[FlowState]:
        """Feed one packet; returns the flows this packet caused to emit."""
        key = canonical_key(pkt)
        emitted: List[FlowState] = []
        flow = self._live.get(key)

        if flow is not None:
            gap = pkt.ts - flow.last_ts
            if flow.closing:
                # the FIN exchange already completed, so the flow ends as
                # fin no matter what follows; a prompt trailing pure ACK is
                # absorbed, anything else (or a late ACK) starts fresh
                if gap <= self.idle_timeout and _is_pure_ack(pkt):
                    flow._append(pkt, self._is_forward(flow, pkt))
                    del self._live[key]
                    emitted.append(self._terminate(flow, "fin"))
                    return emitted
                del self._live[key]
                emitted.append(self._terminate(flow, "fin"))
                flow = None
            elif gap > self.idle_timeout:
                del self._live[key]
                emitted.append(self._terminate(flow, "idle_timeout"))
                flow = None
            elif self.hard_timeout is not None and pkt.ts - flow.first_ts > self.hard_timeout:
                del self._live[key]
                emitted.append(self._terminate(flow, "hard_timeout"))
                flow = None

        if flow is None:
            flow = self._start(key, pkt)
        else:
            flow._append(pkt, self._is_forward(flow, pkt))

        if pkt.ip_protocol == 6:
            if pkt.flag(RST):
                del self._live[key]
                emitted.append(self._terminate(flow, "rst"))
                return emitted
            if pkt.flag(FIN):
                if flow.packets[-1][1]:  # direction of the packet just appended
                    flow.fin_fwd = True
                else:
                    flow.fin_bwd = True
                if flow.fin_fwd and flow.fin_bwd:
                    flow.closing = True
        return emitted

    @staticmethod
    def _is_forward(flow: FlowState, pkt: PacketRecord) -> bool:
        return (pkt.src_ip, pkt.src_port) == flow.forward_initiator

    def flush(self) -> List[FlowState]:
        """Emit every live flow; closing flows count as fin-terminated."""
        flows = sorted(self._live.values(), key=lambda f: (f.first_ts, f.key))
        self._live.clear()
        return [self._terminate(f, "fin" if f.closing else "end_of_capture") for f in flows]


def assemble(packets, idle_timeout: float = 120.0, hard_timeout: Optional[float] = None):
    """Run a packet iterable through a FlowTable; yields terminated flows."""
    table = FlowTable(idle_timeout=idle_timeout, hard_timeout=hard_timeout)
    for pkt in packets:
        yield from table.ingest(pkt)
    yield from table.flush()
