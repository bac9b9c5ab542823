import numpy as np
import pytest

from nidskit.dataset import DatasetTable, subsample_benign
from nidskit.errors import MalformedRule, TargetExceedsPopulation
from nidskit.features import LYCOS_SCHEMA
from nidskit.labeling import (
    AttackScheduleRule,
    class_count_report,
    compile_schedule,
    label_table,
    parse_schedule,
)


def rule(label="Probe", start=600.0, end=1200.0, attackers=("172.16.0.9",),
         victims=("10.0.1.1",), ports=None, protocol=None):
    return AttackScheduleRule(
        label=label,
        start_ts=start,
        end_ts=end,
        attacker_ips=frozenset(attackers),
        victim_ips=frozenset(victims),
        dst_ports=None if ports is None else frozenset(ports),
        ip_protocol=protocol,
    )


class TestMatcher:
    def test_empty_schedule_everything_benign(self):
        m = compile_schedule([])
        assert m.label_flow(100.0, "1.2.3.4", "5.6.7.8", 80, 6) == "Benign"

    def test_window_and_endpoints(self):
        m = compile_schedule([rule()])
        # 10:30-style middle of the window
        assert m.label_flow(900.0, "172.16.0.9", "10.0.1.1", 80, 6) == "Probe"
        # same endpoints outside the window
        assert m.label_flow(2000.0, "172.16.0.9", "10.0.1.1", 80, 6) == "Benign"
        # inside window, unrelated endpoints
        assert m.label_flow(900.0, "10.9.9.9", "10.0.1.1", 80, 6) == "Benign"

    def test_direction_insensitive_match(self):
        m = compile_schedule([rule()])
        # reply flow: victim speaks first
        assert m.label_flow(900.0, "10.0.1.1", "172.16.0.9", 4444, 6) == "Probe"

    def test_first_match_wins_in_file_order(self):
        r1 = rule(label="First")
        r2 = rule(label="Second")
        m = compile_schedule([r1, r2])
        assert m.label_flow(700.0, "172.16.0.9", "10.0.1.1", 80, 6) == "First"

    def test_port_and_protocol_predicates(self):
        m = compile_schedule([rule(ports=(80, 443), protocol=6)])
        assert m.label_flow(700.0, "172.16.0.9", "10.0.1.1", 80, 6) == "Probe"
        assert m.label_flow(700.0, "172.16.0.9", "10.0.1.1", 22, 6) == "Benign"
        assert m.label_flow(700.0, "172.16.0.9", "10.0.1.1", 80, 17) == "Benign"

    def test_window_inclusive_bounds(self):
        m = compile_schedule([rule()])
        assert m.label_flow(600.0, "172.16.0.9", "10.0.1.1", 80, 6) == "Probe"
        assert m.label_flow(1200.0, "172.16.0.9", "10.0.1.1", 80, 6) == "Probe"


class TestScheduleFile:
    def test_parse_and_wildcards(self, tmp_path):
        path = tmp_path / "sched.txt"
        path.write_text(
            "# comment\n"
            "Probe,1970-01-01T00:10:00+00:00,1970-01-01T00:20:00+00:00,172.16.0.9;172.16.0.10,10.0.1.1\n"
            "DROP,1970-01-01T00:50:00+00:00,1970-01-01T00:55:00+00:00,*,*\n"
            "Flood,1970-01-01T01:00:00+00:00,1970-01-01T02:00:00+00:00,172.16.0.9,10.0.1.1,80;443,6\n"
        )
        rules = parse_schedule(path)
        assert [r.label for r in rules] == ["Probe", "DROP", "Flood"]
        assert rules[0].attacker_ips == {"172.16.0.9", "172.16.0.10"}
        assert rules[1].attacker_ips == frozenset()
        assert rules[2].dst_ports == {80, 443}
        assert rules[2].ip_protocol == 6
        assert rules[0].start_ts == 600.0

    def test_end_before_start_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("X,1970-01-01T00:20:00+00:00,1970-01-01T00:10:00+00:00,*,*\n")
        with pytest.raises(MalformedRule):
            parse_schedule(path)

    @pytest.mark.parametrize(
        "line",
        [
            "OnlyThreeFields,1970-01-01T00:00:00,1970-01-01T00:01:00",
            "X,not-a-time,1970-01-01T00:01:00,*,*",
            "Benign,1970-01-01T00:00:00,1970-01-01T00:01:00,*,*",
            "X,1970-01-01T00:00:00,1970-01-01T00:01:00,*,*,nonport",
        ],
    )
    def test_malformed_lines(self, tmp_path, line):
        path = tmp_path / "bad.txt"
        path.write_text(line + "\n")
        with pytest.raises(MalformedRule):
            parse_schedule(path)


def toy_table(n=8):
    rng = np.random.default_rng(0)
    rows = rng.random((n, 77))
    di = LYCOS_SCHEMA.model_names.index("dst_port")
    pi = LYCOS_SCHEMA.model_names.index("ip_prot")
    rows[:, di] = 80
    rows[:, pi] = 6
    meta = {
        "src_ip": np.array([f"172.16.0.{i % 2 + 9}" for i in range(n)], dtype=object),
        "src_port": np.array([1000 + i for i in range(n)], dtype=object),
        "dst_ip": np.array(["10.0.1.1"] * n, dtype=object),
        "timestamp": np.array([i * 300.0 for i in range(n)], dtype=object),
    }
    return DatasetTable(LYCOS_SCHEMA, rows, None, meta=meta, source="toy")


class TestLabelTable:
    def test_labels_and_drop(self):
        table = toy_table()
        m = compile_schedule([
            rule(label="Probe", start=500.0, end=1000.0, attackers=("172.16.0.9",)),
            AttackScheduleRule("DROP", 2000.0, 2500.0, frozenset(), frozenset()),
        ])
        out = label_table(table, m)
        # timestamps 600 and 900 hit the probe window; 2100 is dropped
        assert out.n == table.n - 1
        counts = out.class_counts()
        assert counts.get("Probe", 0) >= 1
        assert "DROP" not in counts

    def test_pure_function_of_meta(self):
        table = toy_table()
        m = compile_schedule([rule(label="Probe", start=0.0, end=900.0)])
        first = label_table(table, m).labels.tolist()
        again = label_table(table, m).labels.tolist()
        assert first == again
        # permuting rows permutes labels identically
        perm = np.array([3, 1, 0, 2, 7, 6, 5, 4])
        from nidskit.dataset import _take

        shuffled = _take(table, perm, {"op": "shuffle"})
        assert label_table(shuffled, m).labels.tolist() == [first[i] for i in perm]

    def test_partition_every_flow_labeled_once(self):
        table = toy_table()
        m = compile_schedule([rule(label="Probe", start=500.0, end=1000.0)])
        out = label_table(table, m)
        assert all(lab in ("Probe", "Benign") for lab in out.labels)


class TestSubsampleBenign:
    def _labeled(self, n_benign=100, n_attack=7):
        rng = np.random.default_rng(1)
        from nidskit.features import Feature, FeatureSchema

        schema = FeatureSchema("custom", (Feature("f0", "count", ""),))
        labels = ["Benign"] * n_benign + ["Bot"] * n_attack
        return DatasetTable(schema, rng.random((n_benign + n_attack, 1)),
                            np.array(labels, dtype=object))

    def test_deterministic_sample(self):
        t = self._labeled()
        a = subsample_benign(t, 10, seed=5)
        b = subsample_benign(t, 10, seed=5)
        assert np.array_equal(a.rows, b.rows)
        assert a.class_counts() == {"Benign": 10, "Bot": 7}

    def test_attacks_always_kept(self):
        out = subsample_benign(self._labeled(), 1, seed=0)
        assert out.class_counts()["Bot"] == 7

    def test_target_exceeds_population(self):
        with pytest.raises(TargetExceedsPopulation):
            subsample_benign(self._labeled(), 101, seed=0)


def test_class_count_report_structure():
    t = toy_table()
    t.labels = np.array(
        ["Benign", "Probe", "Benign", "Flood", "Probe", "Benign", "Benign", "Flood"],
        dtype=object,
    )
    report = class_count_report(t)
    assert report[0] == ("Benign", 4)
    assert report[1:] == [("Flood", 2), ("Probe", 2)]
