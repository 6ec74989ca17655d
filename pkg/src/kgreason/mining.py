"""Rule mining, scoring, filtering, and composition.

Two-hop rule instances are found by a breadth-first sweep: for every edge
(A, r1, B) and continuation (B, r2, C), every relation r3 with (A, r3, C)
present closes the path and witnesses one instance of
``r3(X,Y) <- r1(X,Z1) & r2(Z1,Y)``.

Scoring counts distinct full variable bindings.  ``body_count`` (x) is the
number of bindings satisfying the body chain alone, ``head_and_body_count``
(y) the subset whose head fact also holds, and confidence is the exact
rational y/x.  Thresholds are interpreted as exact decimals so that the
strict comparison at a boundary such as 0.6 behaves the way the printed
number reads, not the way its nearest binary float rounds.
"""

from __future__ import annotations

import multiprocessing
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Sequence

from .errors import UsageError
from .kg import FORWARD, KnowledgeGraph, Triple
from .rules import DEFAULT_MAX_HOP, Rule, RuleInstance, RuleStats, sort_stats

DEFAULT_MIN_SUPPORT = 1000
DEFAULT_MIN_CONFIDENCE = "0.6"


def exact_fraction(value) -> Fraction:
    """Interpret a threshold as an exact decimal quantity."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise UsageError(f"not a valid threshold: {value!r}") from exc
    raise UsageError(f"not a valid threshold: {value!r}")


# ----------------------------------------------------------------------
# two-hop mining

def _closing_relations(kg: KnowledgeGraph, head: int) -> dict[int, list[int]]:
    """Map tail entity -> relations linking ``head`` directly to that tail."""
    closers: dict[int, list[int]] = {}
    for r, t in kg.neighbors(head, FORWARD):
        closers.setdefault(t, []).append(r)
    return closers


def mine_two_hop_instances(kg: KnowledgeGraph) -> Iterator[RuleInstance]:
    """Enumerate every two-hop rule instance, deterministically, no dupes.

    Emission order: ascending start entity, then canonical edge order for
    the first and second body edges, then ascending closing relation.
    """
    rule_cache: dict[tuple[int, int, int], Rule] = {}
    for a in range(kg.num_entities):
        edges_a = kg.neighbors(a, FORWARD)
        if not edges_a:
            continue
        closers = _closing_relations(kg, a)
        for r1, b in edges_a:
            for r2, c in kg.neighbors(b, FORWARD):
                for r3 in closers.get(c, ()):
                    key = (r3, r1, r2)
                    rule = rule_cache.get(key)
                    if rule is None:
                        rule = Rule(
                            kg.relation_name(r3),
                            (kg.relation_name(r1), kg.relation_name(r2)),
                        )
                        rule_cache[key] = rule
                    yield RuleInstance(
                        rule=rule,
                        entities=(a, b, c),
                        body_facts=(Triple(a, r1, b), Triple(b, r2, c)),
                        head_fact=Triple(a, r3, c),
                    )


def _count_stripe(kg: KnowledgeGraph, stripe: int, stripes: int) -> dict[tuple[int, int, int], int]:
    counts: dict[tuple[int, int, int], int] = {}
    for a in range(stripe, kg.num_entities, stripes):
        edges_a = kg.neighbors(a, FORWARD)
        if not edges_a:
            continue
        closers = _closing_relations(kg, a)
        for r1, b in edges_a:
            for r2, c in kg.neighbors(b, FORWARD):
                for r3 in closers.get(c, ()):
                    key = (r3, r1, r2)
                    counts[key] = counts.get(key, 0) + 1
    return counts


_WORKER_KG: Optional[KnowledgeGraph] = None


def _stripe_job(args: tuple[int, int]) -> dict[tuple[int, int, int], int]:
    stripe, stripes = args
    assert _WORKER_KG is not None
    return _count_stripe(_WORKER_KG, stripe, stripes)


def _mine_counts(kg: KnowledgeGraph, workers: int) -> dict[tuple[int, int, int], int]:
    if workers <= 1:
        return _count_stripe(kg, 0, 1)
    global _WORKER_KG
    try:
        ctx = multiprocessing.get_context("fork")
    except ValueError:
        return _count_stripe(kg, 0, 1)
    _WORKER_KG = kg
    try:
        # Fork after setting the module global so children inherit the graph
        # without pickling it.
        with ctx.Pool(processes=workers) as pool:
            partials = pool.map(_stripe_job, [(i, workers) for i in range(workers)])
    finally:
        _WORKER_KG = None
    merged: dict[tuple[int, int, int], int] = {}
    for part in partials:
        for key, n in part.items():
            merged[key] = merged.get(key, 0) + n
    return merged


def _pair_body_counts(
    kg: KnowledgeGraph, pairs: Iterable[tuple[int, int]]
) -> dict[tuple[int, int], int]:
    """x counts for two-hop bodies: paths through a shared middle entity."""
    tail_counts: dict[int, dict[int, int]] = {}
    head_counts: dict[int, dict[int, int]] = {}
    for rid in range(kg.num_relations):
        tc: dict[int, int] = {}
        hc: dict[int, int] = {}
        for h, t in kg.relation_pairs(rid):
            tc[t] = tc.get(t, 0) + 1
            hc[h] = hc.get(h, 0) + 1
        tail_counts[rid] = tc
        head_counts[rid] = hc
    out: dict[tuple[int, int], int] = {}
    for r1, r2 in pairs:
        starts = tail_counts[r1]
        ends = head_counts[r2]
        out[(r1, r2)] = sum(n * ends.get(mid, 0) for mid, n in starts.items())
    return out


def mine_rule_stats(kg: KnowledgeGraph, workers: int = 1) -> list[RuleStats]:
    """Score every two-hop rule that has at least one instance on the graph.

    The result is sorted by canonical rule encoding and is byte-for-byte
    identical for any worker count.
    """
    y_counts = _mine_counts(kg, workers)
    x_counts = _pair_body_counts(kg, {(r1, r2) for (_, r1, r2) in y_counts})
    stats = []
    for (r3, r1, r2), y in y_counts.items():
        rule = Rule(
            kg.relation_name(r3), (kg.relation_name(r1), kg.relation_name(r2))
        )
        stats.append(
            RuleStats(
                rule=rule,
                instance_count=y,
                body_count=x_counts[(r1, r2)],
                head_and_body_count=y,
            )
        )
    stats.sort(key=lambda st: st.rule.rule_id)
    return stats


# ----------------------------------------------------------------------
# grounding and scoring for arbitrary chain length

def iter_body_groundings(kg: KnowledgeGraph, rule: Rule) -> Iterator[tuple[int, ...]]:
    """Yield every full binding of the body chain as an entity id tuple.

    Bindings come out grouped by first edge in canonical order, extensions
    ascending, so the stream order is deterministic.  A body relation that
    is absent from the graph yields nothing (the rule is unscorable).
    """
    rels: list[int] = []
    for name in rule.body_relations:
        if not kg.has_relation(name):
            return
        rels.append(kg.relation_id(name))

    hop = len(rels)

    def extend(prefix: tuple[int, ...], depth: int) -> Iterator[tuple[int, ...]]:
        if depth == hop:
            yield prefix
            return
        for nxt in kg.successors(prefix[-1], rels[depth]):
            yield from extend(prefix + (nxt,), depth + 1)

    for h, t in kg.relation_pairs(rels[0]):
        yield from extend((h, t), 1)


def ground_rule(
    kg: KnowledgeGraph, rule: Rule, require_head: bool = True
) -> Iterator[RuleInstance]:
    """Stream body groundings as RuleInstance records.

    With ``require_head`` only instances whose head fact is present are
    produced.  Without it every body grounding is produced and ``head_fact``
    is set only when the head triple happens to hold.
    """
    head_rid = (
        kg.relation_id(rule.head_relation)
        if kg.has_relation(rule.head_relation)
        else None
    )
    rel_ids = [
        kg.relation_id(name) if kg.has_relation(name) else None
        for name in rule.body_relations
    ]
    for entities in iter_body_groundings(kg, rule):
        head_fact = None
        if head_rid is not None:
            candidate = Triple(entities[0], head_rid, entities[-1])
            if kg.has_fact(candidate):
                head_fact = candidate
        if require_head and head_fact is None:
            continue
        body_facts = tuple(
            Triple(entities[i], rel_ids[i], entities[i + 1])
            for i in range(rule.hop)
        )
        yield RuleInstance(
            rule=rule, entities=entities, body_facts=body_facts, head_fact=head_fact
        )


def score_rule(kg: KnowledgeGraph, rule: Rule) -> RuleStats:
    """Count body groundings and head-satisfying groundings for one rule."""
    head_rid = (
        kg.relation_id(rule.head_relation)
        if kg.has_relation(rule.head_relation)
        else None
    )
    x = 0
    y = 0
    for entities in iter_body_groundings(kg, rule):
        x += 1
        if head_rid is not None and kg.has_fact(
            Triple(entities[0], head_rid, entities[-1])
        ):
            y += 1
    return RuleStats(rule=rule, instance_count=y, body_count=x, head_and_body_count=y)


# ----------------------------------------------------------------------
# filtering

def filter_stats(
    stats: Iterable[RuleStats],
    min_support: int = DEFAULT_MIN_SUPPORT,
    min_confidence=DEFAULT_MIN_CONFIDENCE,
) -> list[RuleStats]:
    """Keep rules with support >= min_support and confidence strictly above
    min_confidence.  Unscorable rules never pass.  Sorted by descending
    confidence, ties by ascending canonical encoding."""
    threshold = exact_fraction(min_confidence)
    kept = [
        st
        for st in stats
        if st.support >= min_support
        and st.confidence is not None
        and st.confidence > threshold
    ]
    return sort_stats(kept)


def filter_rules(
    stats: Iterable[RuleStats],
    min_support: int = DEFAULT_MIN_SUPPORT,
    min_confidence=DEFAULT_MIN_CONFIDENCE,
) -> list[Rule]:
    return [st.rule for st in filter_stats(stats, min_support, min_confidence)]


# ----------------------------------------------------------------------
# composition

def compose_rules(
    outer: Rule, inner: Rule, max_hop: int = DEFAULT_MAX_HOP
) -> Optional[Rule]:
    """Splice ``inner``'s body into ``outer`` where inner's head relation
    occurs in outer's body.

    The leftmost matching body atom is replaced, and variables are renamed
    left to right back to the canonical X, Z1, ..., Y sequence.  Returns
    None when no body atom matches or the combined hop count would exceed
    ``max_hop``.
    """
    try:
        at = outer.body_relations.index(inner.head_relation)
    except ValueError:
        return None
    new_hop = outer.hop + inner.hop - 1
    if new_hop > max_hop:
        return None
    body = (
        outer.body_relations[:at]
        + inner.body_relations
        + outer.body_relations[at + 1 :]
    )
    return Rule(outer.head_relation, body)


def compose_library(
    two_hop: Sequence[Rule], max_hop: int = DEFAULT_MAX_HOP
) -> list[Rule]:
    """Build longer rules from a filtered two-hop set.

    Three-hop rules come from every ordered pair of two-hop rules; four-hop
    rules from splicing a two-hop rule into each composed three-hop rule.
    The result is deduplicated and sorted by (hop, canonical encoding).
    """
    base = sorted(set(two_hop), key=lambda r: r.rule_id)
    seen: dict[str, Rule] = {}
    three: list[Rule] = []
    for outer in base:
        for inner in base:
            rule = compose_rules(outer, inner, max_hop)
            if rule is not None and rule.rule_id not in seen:
                seen[rule.rule_id] = rule
                three.append(rule)
    four: list[Rule] = []
    for outer in three:
        for inner in base:
            rule = compose_rules(outer, inner, max_hop)
            if rule is not None and rule.rule_id not in seen:
                seen[rule.rule_id] = rule
                four.append(rule)
    out = three + four
    out.sort(key=lambda r: (r.hop, r.rule_id))
    return out
