"""Rule encoding, stats arithmetic, and the rules file format."""

from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgreason.errors import DataError
from kgreason.rules import (
    Atom,
    Rule,
    RuleStats,
    chain_vars,
    read_rules,
    sort_stats,
    write_rules,
)

relation_names = st.from_regex(r"[a-z][a-z0-9_]{0,8}", fullmatch=True)


class TestRuleShape:
    def test_chain_vars(self):
        assert chain_vars(2) == ("X", "Z1", "Y")
        assert chain_vars(4) == ("X", "Z1", "Z2", "Z3", "Y")

    def test_two_hop_encoding(self):
        rule = Rule("r1", ("r2", "r3"))
        assert rule.hop == 2
        assert rule.rule_id == "r1(X,Y)<-r2(X,Z1)&r3(Z1,Y)"
        assert rule.formula() == "r1(X, Y) <- r2(X, Z1) & r3(Z1, Y)"

    def test_head_and_body_atoms(self):
        rule = Rule("h", ("a", "b", "c"))
        assert rule.head_atom == Atom("h", "X", "Y")
        assert rule.body_atoms == (
            Atom("a", "X", "Z1"),
            Atom("b", "Z1", "Z2"),
            Atom("c", "Z2", "Y"),
        )

    def test_decode_round_trip(self):
        rid = "h(X,Y)<-a(X,Z1)&b(Z1,Z2)&c(Z2,Y)"
        assert Rule.decode(rid).rule_id == rid

    def test_decode_rejects_non_canonical(self):
        with pytest.raises(DataError):
            Rule.decode("h(X,Y)<-a(X,Q)&b(Q,Y)")
        with pytest.raises(DataError):
            Rule.decode("not a rule")

    @settings(max_examples=50, deadline=None)
    @given(relation_names, st.lists(relation_names, min_size=2, max_size=4))
    def test_encode_decode_inverse(self, head, body):
        rule = Rule(head, tuple(body))
        assert Rule.decode(rule.rule_id) == rule


class TestRuleStats:
    def test_confidence_exact_fraction(self):
        stats = RuleStats(Rule("r1", ("r2", "r3")), 1, 2, 1)
        assert stats.confidence == Fraction(1, 2)
        assert stats.support == 1

    def test_unscorable_when_no_groundings(self):
        stats = RuleStats(Rule("r1", ("r2", "r3")), 0, 0, 0)
        assert stats.confidence is None

    def test_sort_descending_confidence_then_encoding(self):
        a = RuleStats(Rule("b", ("p", "q")), 3, 4, 3)   # 0.75
        b = RuleStats(Rule("a", ("p", "q")), 1, 2, 1)   # 0.5
        c = RuleStats(Rule("a", ("p", "r")), 2, 4, 2)   # 0.5, later encoding
        d = RuleStats(Rule("z", ("p", "q")), 0, 0, 0)   # unscorable last
        assert sort_stats([d, c, b, a]) == [a, b, c, d]


class TestRulesFile:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "rules.jsonl"
        stats = [
            RuleStats(Rule("r1", ("r2", "r3")), 5, 8, 5),
            RuleStats(Rule("h", ("a", "b", "c")), 2, 3, 2),
        ]
        assert write_rules(path, stats) == 2
        loaded = read_rules(path)
        assert [s.rule for s in loaded] == [s.rule for s in stats]
        assert [s.confidence for s in loaded] == [Fraction(5, 8), Fraction(2, 3)]
        assert [s.support for s in loaded] == [5, 2]

    def test_confidence_recomputed_exactly(self, tmp_path):
        # The file stores a float rendering for humans, but reloading must
        # restore the exact ratio from the integer counters.
        path = tmp_path / "rules.jsonl"
        write_rules(path, [RuleStats(Rule("r1", ("r2", "r3")), 1, 3, 1)])
        (loaded,) = read_rules(path)
        assert loaded.confidence == Fraction(1, 3)

    def test_reject_inconsistent_line(self, tmp_path):
        path = tmp_path / "rules.jsonl"
        path.write_text('{"rule": "zzz", "hop": 2}\n')
        with pytest.raises(DataError):
            read_rules(path)
