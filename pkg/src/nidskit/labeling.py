"""Flow labeling from a declarative attack schedule.

Schedule file format (UTF-8, one rule per line, `#` comments):

    label,start_iso8601,end_iso8601,attacker_ips,victim_ips[,dst_ports][,protocol]

IP sets are semicolon-separated; `*` is a wildcard. The special label
DROP marks exclusion windows: matching flows are removed from the output
entirely. Overlaps resolve by first match in file order; a flow matching
no rule is Benign.

A flow is anchored at its first packet: window containment tests first_ts
only, and a rule matches if the attacker->victim pair matches either flow
direction (attack replies belong to the attack flow).
"""

from dataclasses import dataclass
from datetime import datetime, timezone
from typing import List, Optional, Tuple

import numpy as np

from .dataset import BENIGN, DatasetTable, _take
from .errors import DataError, MalformedRule

DROP = "DROP"


@dataclass(frozen=True)
class AttackScheduleRule:
    label: str
    start_ts: float
    end_ts: float  # inclusive
    attacker_ips: frozenset  # empty = wildcard
    victim_ips: frozenset
    dst_ports: Optional[frozenset] = None
    ip_protocol: Optional[int] = None

    def matches(self, first_ts: float, src_ip: str, dst_ip: str,
                dst_port: int, protocol: int) -> bool:
        if not (self.start_ts <= first_ts <= self.end_ts):
            return False
        if self.ip_protocol is not None and protocol != self.ip_protocol:
            return False
        if self.dst_ports is not None and dst_port not in self.dst_ports:
            return False
        fwd = (not self.attacker_ips or src_ip in self.attacker_ips) and (
            not self.victim_ips or dst_ip in self.victim_ips
        )
        rev = (not self.attacker_ips or dst_ip in self.attacker_ips) and (
            not self.victim_ips or src_ip in self.victim_ips
        )
        return fwd or rev


def _parse_ts(text: str, line_no: int) -> float:
    try:
        dt = datetime.fromisoformat(text.strip())
    except ValueError:
        raise MalformedRule(line_no, f"bad timestamp {text!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _parse_ips(text: str) -> frozenset:
    text = text.strip()
    if text == "*" or not text:
        return frozenset()
    return frozenset(p.strip() for p in text.split(";") if p.strip())


def parse_schedule(path) -> List[AttackScheduleRule]:
    rules = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p for p in line.split(",")]
            if len(parts) < 5:
                raise MalformedRule(line_no, "need at least label,start,end,attackers,victims")
            label = parts[0].strip()
            if not label:
                raise MalformedRule(line_no, "empty label")
            if label == BENIGN:
                raise MalformedRule(line_no, "Benign is implicit and cannot be scheduled")
            start = _parse_ts(parts[1], line_no)
            end = _parse_ts(parts[2], line_no)
            if end < start:
                raise MalformedRule(line_no, "window end precedes start")
            ports = None
            if len(parts) >= 6 and parts[5].strip() and parts[5].strip() != "*":
                try:
                    ports = frozenset(int(p) for p in parts[5].split(";") if p.strip())
                except ValueError:
                    raise MalformedRule(line_no, f"bad port list {parts[5]!r}") from None
            protocol = None
            if len(parts) >= 7 and parts[6].strip() and parts[6].strip() != "*":
                try:
                    protocol = int(parts[6])
                except ValueError:
                    raise MalformedRule(line_no, f"bad protocol {parts[6]!r}") from None
            rules.append(
                AttackScheduleRule(
                    label=label,
                    start_ts=start,
                    end_ts=end,
                    attacker_ips=_parse_ips(parts[3]),
                    victim_ips=_parse_ips(parts[4]),
                    dst_ports=ports,
                    ip_protocol=protocol,
                )
            )
    return rules


class ScheduleMatcher:
    """Compiled schedule; first matching rule in file order wins."""

    def __init__(self, rules: List[AttackScheduleRule]):
        for i, r in enumerate(rules):
            if r.end_ts < r.start_ts:
                raise MalformedRule(i + 1, "window end precedes start")
        self.rules = list(rules)
        # quick reject bounds: outside [lo, hi) nothing can match
        self._lo = min((r.start_ts for r in rules), default=0.0)
        self._hi = max((r.end_ts for r in rules), default=-1.0)

    def label_flow(self, first_ts: float, src_ip: str, dst_ip: str,
                   dst_port: int, protocol: int) -> str:
        """Label for one flow: a rule label, DROP, or Benign."""
        if self.rules and self._lo <= first_ts <= self._hi:
            for rule in self.rules:
                if rule.matches(first_ts, src_ip, dst_ip, dst_port, protocol):
                    return rule.label
        return BENIGN


def compile_schedule(rules: List[AttackScheduleRule]) -> ScheduleMatcher:
    return ScheduleMatcher(rules)


def label_table(table: DatasetTable, matcher: ScheduleMatcher) -> DatasetTable:
    """Label every flow of an extraction-schema table; DROP rows removed."""
    required = ("src_ip", "dst_ip", "timestamp")
    for name in required:
        if name not in table.meta:
            raise DataError(
                f"labeling needs the meta column {name!r}; label the extract "
                "output, not a projected dataset"
            )
    dst_port = table.column("dst_port")
    protocol = table.column("ip_prot")
    labels = []
    for i in range(table.n):
        labels.append(
            matcher.label_flow(
                float(table.meta["timestamp"][i]),
                str(table.meta["src_ip"][i]),
                str(table.meta["dst_ip"][i]),
                int(dst_port[i]),
                int(protocol[i]),
            )
        )
    labels = np.array(labels, dtype=object)
    keep = np.flatnonzero(labels != DROP)
    dropped = table.n - keep.size
    out = _take(table, keep, {"op": "label", "rules": len(matcher.rules), "dropped": dropped})
    out.labels = labels[keep]
    return out


def class_count_report(table: DatasetTable) -> List[Tuple[str, int]]:
    """(label, count) rows: Benign first, then attacks alphabetically."""
    counts = table.class_counts()
    rows = [(BENIGN, counts.get(BENIGN, 0))]
    rows += sorted((k, v) for k, v in counts.items() if k != BENIGN)
    return rows
