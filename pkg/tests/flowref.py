"""Independent brute-force reference for flow assembly and features.

Deliberately written with a different structure from the package code
(dicts + the statistics module, no numpy, no shared helpers) so the two
can only agree if the semantics agree.
"""

import math
import statistics

FIN = 0x01
SYN = 0x02
RST = 0x04
PSH = 0x08
ACK = 0x10
URG = 0x20
ECE = 0x40
CWR = 0x80

REORDER_TOL = 1e-3


def ref_key(pkt):
    a = (pkt.src_ip, pkt.src_port)
    b = (pkt.dst_ip, pkt.dst_port)
    lo, hi = (a, b) if a <= b else (b, a)
    return (lo, hi, pkt.ip_protocol)


def _pure_ack(pkt):
    return (
        pkt.tcp_flags & ACK
        and pkt.payload_len_bytes == 0
        and not (pkt.tcp_flags & (FIN | SYN | RST | PSH | URG))
    )


def ref_flows(packets, idle_timeout=120.0, hard_timeout=None):
    """Single-pass grouping; returns flow dicts in emission order."""
    live = {}
    emitted = []

    def fresh(key, pkt):
        return {
            "key": key,
            "initiator": (pkt.src_ip, pkt.src_port),
            "first": pkt.ts,
            "last": pkt.ts,
            "pkts": [],  # (record, is_forward, effective_ts)
            "fins": set(),
            "closing": False,
            "ended": None,
        }

    def push(st, pkt):
        ts = pkt.ts
        if ts < st["last"] - REORDER_TOL:
            ts = st["last"]
        fwd = (pkt.src_ip, pkt.src_port) == st["initiator"]
        st["pkts"].append((pkt, fwd, ts))
        st["last"] = max(st["last"], ts)
        return fwd

    for pkt in packets:
        key = ref_key(pkt)
        st = live.get(key)
        if st is not None:
            if st["closing"]:
                st["ended"] = "fin"
                if pkt.ts - st["last"] <= idle_timeout and _pure_ack(pkt):
                    push(st, pkt)
                    emitted.append(live.pop(key))
                    continue
                emitted.append(live.pop(key))
                st = None
            elif pkt.ts - st["last"] > idle_timeout:
                st["ended"] = "idle_timeout"
                emitted.append(live.pop(key))
                st = None
            elif hard_timeout is not None and pkt.ts - st["first"] > hard_timeout:
                st["ended"] = "hard_timeout"
                emitted.append(live.pop(key))
                st = None
        if st is None:
            st = fresh(key, pkt)
            live[key] = st
        fwd = push(st, pkt)
        if pkt.ip_protocol == 6:
            if pkt.tcp_flags & RST:
                st["ended"] = "rst"
                emitted.append(live.pop(key))
                continue
            if pkt.tcp_flags & FIN:
                st["fins"].add(fwd)
                if st["fins"] == {True, False}:
                    st["closing"] = True
    for st in sorted(live.values(), key=lambda s: (s["first"], s["key"])):
        st["ended"] = "fin" if st["closing"] else "end_of_capture"
        emitted.append(st)
    live.clear()
    return emitted


def _st(vals):
    if not vals:
        return {"min": 0.0, "max": 0.0, "mean": 0.0, "std": 0.0, "var": 0.0}
    mean = statistics.fmean(vals)
    var = statistics.fmean([(v - mean) ** 2 for v in vals])
    return {"min": min(vals), "max": max(vals), "mean": mean,
            "std": math.sqrt(var), "var": var}


def ref_features(flow, activity_timeout=5.0, bulk_gap=1.0, subflow_gap=1.0):
    """All 77 features of one reference flow, recomputed from scratch."""
    pkts = flow["pkts"]
    fwd = [(p, ts) for p, f, ts in pkts if f]
    bwd = [(p, ts) for p, f, ts in pkts if not f]
    every = [(p, ts) for p, f, ts in pkts]
    duration = flow["last"] - flow["first"]

    def lens(group):
        return [float(p.total_len_bytes) for p, _ in group]

    def iats(group):
        times = [ts for _, ts in group]
        return [times[i + 1] - times[i] for i in range(len(times) - 1)]

    def nflag(group, mask):
        return float(sum(1 for p, _ in group if p.tcp_flags & mask))

    def rate(x, dur):
        if dur <= 0:
            return 0.0
        r = x / dur
        return r if math.isfinite(r) else 0.0

    def bulk(group):
        runs = []
        for p, ts in group:
            if p.payload_len_bytes <= 0:
                continue
            if runs and ts - runs[-1][-1][1] <= bulk_gap:
                runs[-1].append((p, ts))
            else:
                runs.append([(p, ts)])
        runs = [r for r in runs if len(r) >= 4]
        if not runs:
            return 0.0, 0.0, 0.0
        bs = [float(sum(p.payload_len_bytes for p, _ in r)) for r in runs]
        cs = [float(len(r)) for r in runs]
        rs = [rate(b, r[-1][1] - r[0][1]) for b, r in zip(bs, runs)]
        return (statistics.fmean(bs), statistics.fmean(cs), statistics.fmean(rs))

    f_len, b_len, a_len = _st(lens(fwd)), _st(lens(bwd)), _st(lens(every))
    f_iat, b_iat, a_iat = _st(iats(fwd)), _st(iats(bwd)), _st(iats(every))

    gaps = iats(every)
    n_sub = 1 + sum(1 for g in gaps if g > subflow_gap)

    active, idle = [], []
    start = every[0][1]
    prev = every[0][1]
    for _, ts in every[1:]:
        if ts - prev > activity_timeout:
            active.append(prev - start)
            idle.append(ts - prev)
            start = ts
        prev = ts
    active.append(prev - start)
    act, idl = _st(active), _st(idle)

    fwd_win = -1.0
    for p, _ in fwd:
        if p.tcp_flags & SYN:
            fwd_win = float(p.tcp_window)
            break
    bwd_win = float(bwd[0][0].tcp_window) if bwd else -1.0

    fb = bulk(fwd)
    bb = bulk(bwd)
    first = every[0][0]
    return {
        "dst_port": float(first.dst_port),
        "ip_prot": float(first.ip_protocol),
        "flow_duration": duration,
        "fwd_pkt_cnt": float(len(fwd)),
        "bwd_pkt_cnt": float(len(bwd)),
        "fwd_pkt_len_tot": sum(lens(fwd)),
        "bwd_pkt_len_tot": sum(lens(bwd)),
        "fwd_pkt_len_min": f_len["min"],
        "fwd_pkt_len_max": f_len["max"],
        "fwd_pkt_len_mean": f_len["mean"],
        "fwd_pkt_len_std": f_len["std"],
        "bwd_pkt_len_min": b_len["min"],
        "bwd_pkt_len_max": b_len["max"],
        "bwd_pkt_len_mean": b_len["mean"],
        "bwd_pkt_len_std": b_len["std"],
        "pkt_len_min": a_len["min"],
        "pkt_len_max": a_len["max"],
        "pkt_len_mean": a_len["mean"],
        "pkt_len_std": a_len["std"],
        "pkt_len_var": a_len["var"],
        "byte_per_s": rate(sum(lens(every)), duration),
        "pkt_per_s": rate(float(len(every)), duration),
        "iat_tot": sum(iats(every)),
        "iat_mean": a_iat["mean"],
        "iat_std": a_iat["std"],
        "iat_max": a_iat["max"],
        "iat_min": a_iat["min"],
        "fwd_iat_tot": sum(iats(fwd)),
        "fwd_iat_mean": f_iat["mean"],
        "fwd_iat_std": f_iat["std"],
        "fwd_iat_max": f_iat["max"],
        "fwd_iat_min": f_iat["min"],
        "bwd_iat_tot": sum(iats(bwd)),
        "bwd_iat_mean": b_iat["mean"],
        "bwd_iat_std": b_iat["std"],
        "bwd_iat_max": b_iat["max"],
        "bwd_iat_min": b_iat["min"],
        "fwd_flag_psh": nflag(fwd, PSH),
        "bwd_flag_psh": nflag(bwd, PSH),
        "fwd_flag_urg": nflag(fwd, URG),
        "bwd_flag_urg": nflag(bwd, URG),
        "fwd_pkt_hdr_len_tot": float(sum(p.header_len_bytes for p, _ in fwd)),
        "bwd_pkt_hdr_len_tot": float(sum(p.header_len_bytes for p, _ in bwd)),
        "fwd_pkt_per_s": rate(float(len(fwd)), duration),
        "bwd_pkt_per_s": rate(float(len(bwd)), duration),
        "flag_fin": nflag(every, FIN),
        "flag_SYN": nflag(every, SYN),
        "flag_rst": nflag(every, RST),
        "flag_psh": nflag(every, PSH),
        "flag_ack": nflag(every, ACK),
        "flag_urg": nflag(every, URG),
        "flag_ece": nflag(every, ECE),
        "flag_cwr": nflag(every, CWR),
        "down_up_ratio": len(bwd) / len(fwd),
        "fwd_bulk_bytes_mean": fb[0],
        "fwd_bulk_pkt_mean": fb[1],
        "fwd_bulk_rate_mean": fb[2],
        "bwd_bulk_bytes_mean": bb[0],
        "bwd_bulk_pkt_mean": bb[1],
        "bwd_bulk_rate_mean": bb[2],
        "fwd_subflow_pkt_mean": len(fwd) / n_sub,
        "fwd_subflow_bytes_mean": sum(lens(fwd)) / n_sub,
        "bwd_subflow_pkt_mean": len(bwd) / n_sub,
        "bwd_subflow_bytes_mean": sum(lens(bwd)) / n_sub,
        "fwd_tcp_init_win_bytes": fwd_win,
        "bwd_tcp_init_win_bytes": bwd_win,
        "fwd_non_empty_pkt_cnt": float(sum(1 for p, _ in fwd if p.payload_len_bytes > 0)),
        "fwd_pkt_hdr_len_min": float(min((p.header_len_bytes for p, _ in fwd), default=0)),
        "bwd_pkt_hdr_len_min": float(min((p.header_len_bytes for p, _ in bwd), default=0)),
        "active_mean": act["mean"],
        "active_std": act["std"],
        "active_max": act["max"],
        "active_min": act["min"],
        "idle_mean": idl["mean"],
        "idle_std": idl["std"],
        "idle_max": idl["max"],
        "idle_min": idl["min"],
    }
