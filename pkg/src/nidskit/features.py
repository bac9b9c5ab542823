"""Flow finalization into the 77-feature vector.

Naming follows the LycoS-style snake_case convention (pkt_len_std,
fwd_tcp_init_win_bytes, ...). Every feature's formula is registered in
FORMULAS; the registry doubles as documentation and as the regression
guard against two columns sharing one definition.

Conventions that remove the classic Infinity/NaN artifacts:
  * every per-second rate is 0 when the relevant duration is 0
  * std/var use the population convention (divide by n); n <= 1 gives 0
  * stats over an empty direction are 0
  * init-window features are -1 when the defining packet is absent
"""

import ipaddress
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from ._util import sha256_text
from .errors import EmptyFlow
from .flows import FlowState
from .pcap import ACK, CWR, ECE, FIN, PSH, RST, SYN, URG, PacketRecord

SCHEMA_VERSION = "lycos-style-1"

META_FAMILY = "meta"


@dataclass(frozen=True)
class Feature:
    name: str
    family: str  # meta|count|length|iat|flags|header|rate|ratio|bulk|subflow|window|active_idle|duration
    unit: str


class FeatureSchema:
    """Ordered, versioned column schema; the hash is stamped into outputs."""

    def __init__(self, version: str, features: Tuple[Feature, ...]):
        names = [f.name for f in features]
        if len(set(names)) != len(names):
            raise ValueError("duplicate feature names in schema")
        self.version = version
        self.features = tuple(features)
        self.names = tuple(names)
        self.model_names = tuple(f.name for f in features if f.family != META_FAMILY)
        self._index = {n: i for i, n in enumerate(names)}
        body = "\n".join(f"{f.name}|{f.family}|{f.unit}" for f in features)
        self.hash = sha256_text(version + "\n" + body)[:16]

    def __len__(self):
        return len(self.features)

    def index(self, name: str) -> int:
        return self._index[name]

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def family(self, name: str) -> str:
        return self.features[self._index[name]].family

    def model_only(self) -> "FeatureSchema":
        return FeatureSchema(self.version, tuple(f for f in self.features if f.family != META_FAMILY))

    def subset(self, names) -> "FeatureSchema":
        keep = set(names)
        return FeatureSchema(self.version, tuple(f for f in self.features if f.name in keep))

    def replace_feature(self, name: str, replacements) -> "FeatureSchema":
        """New schema with `name` swapped for the given Feature sequence."""
        out: List[Feature] = []
        for f in self.features:
            if f.name == name:
                out.extend(replacements)
            else:
                out.append(f)
        return FeatureSchema(self.version, tuple(out))


def _f(name, family, unit):
    return Feature(name, family, unit)


META_FEATURES = (
    _f("src_ip", META_FAMILY, "address"),
    _f("src_port", META_FAMILY, "port"),
    _f("dst_ip", META_FAMILY, "address"),
    _f("timestamp", META_FAMILY, "s"),
)

MODEL_FEATURES = (
    _f("dst_port", "header", "port"),
    _f("ip_prot", "header", "code"),
    _f("flow_duration", "duration", "s"),
    _f("fwd_pkt_cnt", "count", "packets"),
    _f("bwd_pkt_cnt", "count", "packets"),
    _f("fwd_pkt_len_tot", "length", "bytes"),
    _f("bwd_pkt_len_tot", "length", "bytes"),
    _f("fwd_pkt_len_min", "length", "bytes"),
    _f("fwd_pkt_len_max", "length", "bytes"),
    _f("fwd_pkt_len_mean", "length", "bytes"),
    _f("fwd_pkt_len_std", "length", "bytes"),
    _f("bwd_pkt_len_min", "length", "bytes"),
    _f("bwd_pkt_len_max", "length", "bytes"),
    _f("bwd_pkt_len_mean", "length", "bytes"),
    _f("bwd_pkt_len_std", "length", "bytes"),
    _f("pkt_len_min", "length", "bytes"),
    _f("pkt_len_max", "length", "bytes"),
    _f("pkt_len_mean", "length", "bytes"),
    _f("pkt_len_std", "length", "bytes"),
    _f("pkt_len_var", "length", "bytes^2"),
    _f("byte_per_s", "rate", "bytes/s"),
    _f("pkt_per_s", "rate", "packets/s"),
    _f("iat_tot", "iat", "s"),
    _f("iat_mean", "iat", "s"),
    _f("iat_std", "iat", "s"),
    _f("iat_max", "iat", "s"),
    _f("iat_min", "iat", "s"),
    _f("fwd_iat_tot", "iat", "s"),
    _f("fwd_iat_mean", "iat", "s"),
    _f("fwd_iat_std", "iat", "s"),
    _f("fwd_iat_max", "iat", "s"),
    _f("fwd_iat_min", "iat", "s"),
    _f("bwd_iat_tot", "iat", "s"),
    _f("bwd_iat_mean", "iat", "s"),
    _f("bwd_iat_std", "iat", "s"),
    _f("bwd_iat_max", "iat", "s"),
    _f("bwd_iat_min", "iat", "s"),
    _f("fwd_flag_psh", "flags", "packets"),
    _f("bwd_flag_psh", "flags", "packets"),
    _f("fwd_flag_urg", "flags", "packets"),
    _f("bwd_flag_urg", "flags", "packets"),
    _f("fwd_pkt_hdr_len_tot", "header", "bytes"),
    _f("bwd_pkt_hdr_len_tot", "header", "bytes"),
    _f("fwd_pkt_per_s", "rate", "packets/s"),
    _f("bwd_pkt_per_s", "rate", "packets/s"),
    _f("flag_fin", "flags", "packets"),
    _f("flag_SYN", "flags", "packets"),
    _f("flag_rst", "flags", "packets"),
    _f("flag_psh", "flags", "packets"),
    _f("flag_ack", "flags", "packets"),
    _f("flag_urg", "flags", "packets"),
    _f("flag_ece", "flags", "packets"),
    _f("flag_cwr", "flags", "packets"),
    _f("down_up_ratio", "ratio", "ratio"),
    _f("fwd_bulk_bytes_mean", "bulk", "bytes"),
    _f("fwd_bulk_pkt_mean", "bulk", "packets"),
    _f("fwd_bulk_rate_mean", "bulk", "bytes/s"),
    _f("bwd_bulk_bytes_mean", "bulk", "bytes"),
    _f("bwd_bulk_pkt_mean", "bulk", "packets"),
    _f("bwd_bulk_rate_mean", "bulk", "bytes/s"),
    _f("fwd_subflow_pkt_mean", "subflow", "packets"),
    _f("fwd_subflow_bytes_mean", "subflow", "bytes"),
    _f("bwd_subflow_pkt_mean", "subflow", "packets"),
    _f("bwd_subflow_bytes_mean", "subflow", "bytes"),
    _f("fwd_tcp_init_win_bytes", "window", "bytes"),
    _f("bwd_tcp_init_win_bytes", "window", "bytes"),
    _f("fwd_non_empty_pkt_cnt", "count", "packets"),
    _f("fwd_pkt_hdr_len_min", "header", "bytes"),
    _f("bwd_pkt_hdr_len_min", "header", "bytes"),
    _f("active_mean", "active_idle", "s"),
    _f("active_std", "active_idle", "s"),
    _f("active_max", "active_idle", "s"),
    _f("active_min", "active_idle", "s"),
    _f("idle_mean", "active_idle", "s"),
    _f("idle_std", "active_idle", "s"),
    _f("idle_max", "active_idle", "s"),
    _f("idle_min", "active_idle", "s"),
)

LYCOS_SCHEMA = FeatureSchema(SCHEMA_VERSION, META_FEATURES + MODEL_FEATURES)
MODEL_SCHEMA = LYCOS_SCHEMA.model_only()

assert len(MODEL_SCHEMA) == 77, f"model schema must have 77 features, has {len(MODEL_SCHEMA)}"

# One formula per feature. The regression suite checks these identifiers
# are pairwise distinct, so no two columns can share a definition.
FORMULAS = {
    "dst_port": "port of responder endpoint",
    "ip_prot": "IP protocol field",
    "flow_duration": "last_ts - first_ts",
    "fwd_pkt_cnt": "count(fwd)",
    "bwd_pkt_cnt": "count(bwd)",
    "fwd_pkt_len_tot": "sum(total_len[fwd])",
    "bwd_pkt_len_tot": "sum(total_len[bwd])",
    "fwd_pkt_len_min": "min(total_len[fwd])",
    "fwd_pkt_len_max": "max(total_len[fwd])",
    "fwd_pkt_len_mean": "mean(total_len[fwd])",
    "fwd_pkt_len_std": "pstd(total_len[fwd])",
    "bwd_pkt_len_min": "min(total_len[bwd])",
    "bwd_pkt_len_max": "max(total_len[bwd])",
    "bwd_pkt_len_mean": "mean(total_len[bwd])",
    "bwd_pkt_len_std": "pstd(total_len[bwd])",
    "pkt_len_min": "min(total_len[all])",
    "pkt_len_max": "max(total_len[all])",
    "pkt_len_mean": "mean(total_len[all])",
    "pkt_len_std": "pstd(total_len[all])",
    "pkt_len_var": "pvar(total_len[all])",
    "byte_per_s": "sum(total_len[all]) / duration",
    "pkt_per_s": "count(all) / duration",
    "iat_tot": "sum(diff(ts[all]))",
    "iat_mean": "mean(diff(ts[all]))",
    "iat_std": "pstd(diff(ts[all]))",
    "iat_max": "max(diff(ts[all]))",
    "iat_min": "min(diff(ts[all]))",
    "fwd_iat_tot": "sum(diff(ts[fwd]))",
    "fwd_iat_mean": "mean(diff(ts[fwd]))",
    "fwd_iat_std": "pstd(diff(ts[fwd]))",
    "fwd_iat_max": "max(diff(ts[fwd]))",
    "fwd_iat_min": "min(diff(ts[fwd]))",
    "bwd_iat_tot": "sum(diff(ts[bwd]))",
    "bwd_iat_mean": "mean(diff(ts[bwd]))",
    "bwd_iat_std": "pstd(diff(ts[bwd]))",
    "bwd_iat_max": "max(diff(ts[bwd]))",
    "bwd_iat_min": "min(diff(ts[bwd]))",
    "fwd_flag_psh": "count(PSH[fwd])",
    "bwd_flag_psh": "count(PSH[bwd])",
    "fwd_flag_urg": "count(URG[fwd])",
    "bwd_flag_urg": "count(URG[bwd])",
    "fwd_pkt_hdr_len_tot": "sum(header_len[fwd])",
    "bwd_pkt_hdr_len_tot": "sum(header_len[bwd])",
    "fwd_pkt_per_s": "count(fwd) / duration",
    "bwd_pkt_per_s": "count(bwd) / duration",
    "flag_fin": "count(FIN[all])",
    "flag_SYN": "count(SYN[all])",
    "flag_rst": "count(RST[all])",
    "flag_psh": "count(PSH[all])",
    "flag_ack": "count(ACK[all])",
    "flag_urg": "count(URG[all])",
    "flag_ece": "count(ECE[all])",
    "flag_cwr": "count(CWR[all])",
    "down_up_ratio": "count(bwd) / count(fwd)",
    "fwd_bulk_bytes_mean": "mean(payload bytes per fwd bulk)",
    "fwd_bulk_pkt_mean": "mean(packets per fwd bulk)",
    "fwd_bulk_rate_mean": "mean(payload bytes / duration per fwd bulk)",
    "bwd_bulk_bytes_mean": "mean(payload bytes per bwd bulk)",
    "bwd_bulk_pkt_mean": "mean(packets per bwd bulk)",
    "bwd_bulk_rate_mean": "mean(payload bytes / duration per bwd bulk)",
    "fwd_subflow_pkt_mean": "count(fwd) / n_subflows",
    "fwd_subflow_bytes_mean": "sum(total_len[fwd]) / n_subflows",
    "bwd_subflow_pkt_mean": "count(bwd) / n_subflows",
    "bwd_subflow_bytes_mean": "sum(total_len[bwd]) / n_subflows",
    "fwd_tcp_init_win_bytes": "window of first fwd packet with SYN, else -1",
    "bwd_tcp_init_win_bytes": "window of first bwd packet, else -1",
    "fwd_non_empty_pkt_cnt": "count(fwd with payload > 0)",
    "fwd_pkt_hdr_len_min": "min(header_len[fwd])",
    "bwd_pkt_hdr_len_min": "min(header_len[bwd])",
    "active_mean": "mean(active period lengths)",
    "active_std": "pstd(active period lengths)",
    "active_max": "max(active period lengths)",
    "active_min": "min(active period lengths)",
    "idle_mean": "mean(idle gap lengths)",
    "idle_std": "pstd(idle gap lengths)",
    "idle_max": "max(idle gap lengths)",
    "idle_min": "min(idle gap lengths)",
}


@dataclass(frozen=True)
class FlowFeatureConfig:
    activity_timeout: float = 5.0  # gaps above this split active periods
    bulk_gap: float = 1.0  # max intra-bulk gap between payload packets
    subflow_gap: float = 1.0  # gaps above this separate subflows


@dataclass(frozen=True)
class FlowMeta:
    first_ts: float
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    ip_protocol: int
    terminated_by: str


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray  # aligned to MODEL_SCHEMA
    meta: FlowMeta


def _stats(xs: List[float]) -> Tuple[float, float, float, float, float]:
    """(min, max, mean, pstd, pvar); zeros when empty, std 0 when n == 1."""
    n = len(xs)
    if n == 0:
        return 0.0, 0.0, 0.0, 0.0, 0.0
    mean = sum(xs) / n
    var = sum((x - mean) ** 2 for x in xs) / n
    return min(xs), max(xs), mean, math.sqrt(var), var


def _diffs(ts: List[float]) -> List[float]:
    return [b - a for a, b in zip(ts, ts[1:])]


def _rate(amount: float, duration: float) -> float:
    # duration 0 gives rate 0, and so does a duration so small the division
    # overflows: both are the infinity artifact this rule exists to remove
    if duration <= 0:
        return 0.0
    rate = amount / duration
    return rate if math.isfinite(rate) else 0.0


def _bulks(packets: List[PacketRecord], gap: float):
    """Maximal runs of >=4 payload packets with intra-run gaps <= gap."""
    payload = [p for p in packets if p.payload_len_bytes > 0]
    runs: List[List[PacketRecord]] = []
    for p in payload:
        if runs and p.ts - runs[-1][-1].ts <= gap:
            runs[-1].append(p)
        else:
            runs.append([p])
    return [r for r in runs if len(r) >= 4]


def finalize(flow: FlowState, cfg: FlowFeatureConfig = FlowFeatureConfig()) -> FeatureVector:
    """Compute the feature vector of a terminated flow."""
    if flow.packet_count == 0:
        raise EmptyFlow("cannot finalize a flow with no packets")

    fwd = flow.fwd_packets
    bwd = flow.bwd_packets
    allp = [p for p, _ in flow.packets]
    duration = flow.last_ts - flow.first_ts

    fwd_len = [float(p.total_len_bytes) for p in fwd]
    bwd_len = [float(p.total_len_bytes) for p in bwd]
    all_len = [float(p.total_len_bytes) for p in allp]

    f_min, f_max, f_mean, f_std, _ = _stats(fwd_len)
    b_min, b_max, b_mean, b_std, _ = _stats(bwd_len)
    a_min, a_max, a_mean, a_std, a_var = _stats(all_len)

    iat_all = _diffs([p.ts for p in allp])
    iat_fwd = _diffs([p.ts for p in fwd])
    iat_bwd = _diffs([p.ts for p in bwd])
    ia_min, ia_max, ia_mean, ia_std, _ = _stats(iat_all)
    if_min, if_max, if_mean, if_std, _ = _stats(iat_fwd)
    ib_min, ib_max, ib_mean, ib_std, _ = _stats(iat_bwd)

    def flag_count(pkts, mask):
        return float(sum(1 for p in pkts if p.tcp_flags & mask))

    # bulk transfers per direction
    def bulk_feats(pkts):
        bulks = _bulks(pkts, cfg.bulk_gap)
        if not bulks:
            return 0.0, 0.0, 0.0
        sizes = [float(sum(p.payload_len_bytes for p in b)) for b in bulks]
        counts = [float(len(b)) for b in bulks]
        rates = [_rate(s, b[-1].ts - b[0].ts) for s, b in zip(sizes, bulks)]
        n = len(bulks)
        return sum(sizes) / n, sum(counts) / n, sum(rates) / n

    fb_bytes, fb_pkts, fb_rate = bulk_feats(fwd)
    bb_bytes, bb_pkts, bb_rate = bulk_feats(bwd)

    # subflows: combined sequence split on gaps > subflow_gap
    n_subflows = 1 + sum(1 for d in iat_all if d > cfg.subflow_gap)

    # active/idle: combined sequence split on gaps > activity_timeout
    active: List[float] = []
    idle: List[float] = []
    seg_start = allp[0].ts
    prev = allp[0].ts
    for p in allp[1:]:
        gap = p.ts - prev
        if gap > cfg.activity_timeout:
            active.append(prev - seg_start)
            idle.append(gap)
            seg_start = p.ts
        prev = p.ts
    active.append(prev - seg_start)
    ac_min, ac_max, ac_mean, ac_std, _ = _stats(active)
    id_min, id_max, id_mean, id_std, _ = _stats(idle)

    fwd_init_win = -1.0
    for p in fwd:
        if p.tcp_flags & SYN:
            fwd_init_win = float(p.tcp_window)
            break
    bwd_init_win = float(bwd[0].tcp_window) if bwd else -1.0

    first = allp[0]
    values = {
        "dst_port": float(first.dst_port),
        "ip_prot": float(first.ip_protocol),
        "flow_duration": duration,
        "fwd_pkt_cnt": float(len(fwd)),
        "bwd_pkt_cnt": float(len(bwd)),
        "fwd_pkt_len_tot": sum(fwd_len),
        "bwd_pkt_len_tot": sum(bwd_len),
        "fwd_pkt_len_min": f_min,
        "fwd_pkt_len_max": f_max,
        "fwd_pkt_len_mean": f_mean,
        "fwd_pkt_len_std": f_std,
        "bwd_pkt_len_min": b_min,
        "bwd_pkt_len_max": b_max,
        "bwd_pkt_len_mean": b_mean,
        "bwd_pkt_len_std": b_std,
        "pkt_len_min": a_min,
        "pkt_len_max": a_max,
        "pkt_len_mean": a_mean,
        "pkt_len_std": a_std,
        "pkt_len_var": a_var,
        "byte_per_s": _rate(sum(all_len), duration),
        "pkt_per_s": _rate(float(len(allp)), duration),
        "iat_tot": sum(iat_all),
        "iat_mean": ia_mean,
        "iat_std": ia_std,
        "iat_max": ia_max,
        "iat_min": ia_min,
        "fwd_iat_tot": sum(iat_fwd),
        "fwd_iat_mean": if_mean,
        "fwd_iat_std": if_std,
        "fwd_iat_max": if_max,
        "fwd_iat_min": if_min,
        "bwd_iat_tot": sum(iat_bwd),
        "bwd_iat_mean": ib_mean,
        "bwd_iat_std": ib_std,
        "bwd_iat_max": ib_max,
        "bwd_iat_min": ib_min,
        "fwd_flag_psh": flag_count(fwd, PSH),
        "bwd_flag_psh": flag_count(bwd, PSH),
        "fwd_flag_urg": flag_count(fwd, URG),
        "bwd_flag_urg": flag_count(bwd, URG),
        "fwd_pkt_hdr_len_tot": float(sum(p.header_len_bytes for p in fwd)),
        "bwd_pkt_hdr_len_tot": float(sum(p.header_len_bytes for p in bwd)),
        "fwd_pkt_per_s": _rate(float(len(fwd)), duration),
        "bwd_pkt_per_s": _rate(float(len(bwd)), duration),
        "flag_fin": flag_count(allp, FIN),
        "flag_SYN": flag_count(allp, SYN),
        "flag_rst": flag_count(allp, RST),
        "flag_psh": flag_count(allp, PSH),
        "flag_ack": flag_count(allp, ACK),
        "flag_urg": flag_count(allp, URG),
        "flag_ece": flag_count(allp, ECE),
        "flag_cwr": flag_count(allp, CWR),
        "down_up_ratio": len(bwd) / len(fwd),
        "fwd_bulk_bytes_mean": fb_bytes,
        "fwd_bulk_pkt_mean": fb_pkts,
        "fwd_bulk_rate_mean": fb_rate,
        "bwd_bulk_bytes_mean": bb_bytes,
        "bwd_bulk_pkt_mean": bb_pkts,
        "bwd_bulk_rate_mean": bb_rate,
        "fwd_subflow_pkt_mean": len(fwd) / n_subflows,
        "fwd_subflow_bytes_mean": sum(fwd_len) / n_subflows,
        "bwd_subflow_pkt_mean": len(bwd) / n_subflows,
        "bwd_subflow_bytes_mean": sum(bwd_len) / n_subflows,
        "fwd_tcp_init_win_bytes": fwd_init_win,
        "bwd_tcp_init_win_bytes": bwd_init_win,
        "fwd_non_empty_pkt_cnt": float(sum(1 for p in fwd if p.payload_len_bytes > 0)),
        "fwd_pkt_hdr_len_min": float(min((p.header_len_bytes for p in fwd), default=0)),
        "bwd_pkt_hdr_len_min": float(min((p.header_len_bytes for p in bwd), default=0)),
        "active_mean": ac_mean,
        "active_std": ac_std,
        "active_max": ac_max,
        "active_min": ac_min,
        "idle_mean": id_mean,
        "idle_std": id_std,
        "idle_max": id_max,
        "idle_min": id_min,
    }
    arr = np.array([values[n] for n in MODEL_SCHEMA.names], dtype=np.float64)

    meta = FlowMeta(
        first_ts=flow.first_ts,
        src_ip=str(ipaddress.ip_address(first.src_ip)),
        src_port=first.src_port,
        dst_ip=str(ipaddress.ip_address(first.dst_ip)),
        dst_port=first.dst_port,
        ip_protocol=first.ip_protocol,
        terminated_by=flow.terminated_by or "",
    )
    return FeatureVector(values=arr, meta=meta)
