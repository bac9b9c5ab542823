"""Deterministic 5,000-packet capture + attack schedule for pipeline tests.

Benign clients browse two servers over TCP and resolve over UDP; a flood
host hammers a web server inside one window; a scanner probes ports with
SYN/RST inside another; a third window is scheduled as DROP. Everything
derives from one seed.
"""

import os

import numpy as np

from synthcap import RST, SYN, Script, tcp_frame

T0 = 1_600_000_000.0

FLOOD_ATTACKER = "172.16.0.66"
FLOOD_VICTIM = "10.0.1.1"
FLOOD_WINDOW = (T0 + 600.0, T0 + 1200.0)

SCAN_ATTACKER = "172.16.0.77"
SCAN_VICTIM = "10.0.1.2"
SCAN_WINDOW = (T0 + 2000.0, T0 + 2300.0)

DROP_WINDOW = (T0 + 3000.0, T0 + 3300.0)


def build_capture(path, seed=0, target_packets=5000):
    rng = np.random.default_rng(seed)
    s = Script()
    servers = [("10.0.1.1", 80), ("10.0.1.2", 443)]

    # ~380 benign sessions (~11 packets each) spread over the timeline,
    # including the DROP window
    t = T0
    while t < T0 + 3400.0:
        client = f"10.0.0.{rng.integers(2, 250)}"
        cport = int(rng.integers(1024, 60000))
        if rng.random() < 0.25:
            s.udp_exchange(t, client, cport, "10.0.1.3", 53,
                           n=int(rng.integers(1, 3)), gap=0.05,
                           payload=int(rng.integers(32, 200)))
        else:
            server, sport = servers[rng.integers(0, 2)]
            s.tcp_session(t, client, cport, server, sport,
                          n_data=int(rng.integers(1, 4)),
                          gap=float(rng.uniform(0.01, 0.3)),
                          payload=int(rng.integers(100, 900)),
                          termination="fin4" if rng.random() < 0.8 else "fin3",
                          window=int(rng.integers(1024, 65535)))
        t += float(rng.uniform(7.0, 10.0))

    # flood: ~170 short sessions (6 packets each) inside the flood window
    t = FLOOD_WINDOW[0] + 1.0
    while t < FLOOD_WINDOW[1] - 5.0:
        cport = int(rng.integers(1024, 60000))
        s.tcp_session(t, FLOOD_ATTACKER, cport, FLOOD_VICTIM, 80,
                      n_data=1, gap=0.002, payload=int(rng.integers(600, 1400)),
                      termination="rst", window=64)
        t += float(rng.uniform(2.8, 4.2))

    # scan: ~250 SYN probes answered by RST inside the scan window
    t = SCAN_WINDOW[0] + 1.0
    port = 1
    while t < SCAN_WINDOW[1] - 2.0:
        cport = int(rng.integers(1024, 60000))
        s.add(t, tcp_frame(SCAN_ATTACKER, cport, SCAN_VICTIM, port, flags=SYN, window=1024))
        s.add(t + 0.001, tcp_frame(SCAN_VICTIM, port, SCAN_ATTACKER, cport, flags=RST, window=0))
        port += 1
        t += float(rng.uniform(1.0, 1.3))

    packets = s.sorted_packets()
    if len(packets) > target_packets:
        packets = packets[:target_packets]
    s.packets = packets
    s.write(path)
    return len(packets)


def write_schedule(path):
    def iso(ts):
        import datetime

        return (
            datetime.datetime.fromtimestamp(ts, datetime.timezone.utc)
            .strftime("%Y-%m-%dT%H:%M:%S+00:00")
        )

    lines = [
        "# synthetic attack schedule",
        f"SynFlood,{iso(FLOOD_WINDOW[0])},{iso(FLOOD_WINDOW[1])},{FLOOD_ATTACKER},{FLOOD_VICTIM}",
        f"SynScan,{iso(SCAN_WINDOW[0])},{iso(SCAN_WINDOW[1])},{SCAN_ATTACKER},{SCAN_VICTIM}",
        f"DROP,{iso(DROP_WINDOW[0])},{iso(DROP_WINDOW[1])},*,*",
    ]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    return path
