"""Trial-and-error exploration over a candidate rule library.

Given a question (head relation plus the known entity), the agent tries
candidate rules in order.  For each rule it grounds the body chain from the
known end, committing to the canonically first full grounding.  When no
grounding exists, the attempt is recorded as a missing-fact error at the
point where the canonical greedy walk stalled, and the next candidate is
tried. The trial cap guarantees termination even against an oracle that
answers nothing.

Successful traces render to reasoning text in the same shape as plain
chain answers; traces with errors additionally narrate the abandoned paths
("... this path is not applicable. Let's consider a different path ...")
so rendered length grows with the number of errors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

from .client import VERDICT_KNOWN
from .errors import UsageError
from .generation import (
    ReasoningSample,
    chain_sentences,
    conclusion_text,
    query_entities,
    render_question,
    sample_id_for,
    select_query_side,
    validated_polish,
    QUERY_SKIP,
)
from .kg import KnowledgeGraph, Triple
from .rules import Rule, RuleInstance, RuleStats
from .selection import SelectionPool, extend_name_map
from .templates import SIDE_OBJECT, SIDE_SUBJECT, TemplateLibrary

logger = logging.getLogger(__name__)

OUTCOME_SUCCESS = "success"
OUTCOME_EXHAUSTED = "exhausted"

ORACLE_KG = "kg"
ORACLE_PROBE = "probe"


# ----------------------------------------------------------------------
# fact oracles

class KgFactOracle:
    """Ground truth oracle: a fact holds iff it is in the graph."""

    kind = ORACLE_KG

    def __init__(self, kg: KnowledgeGraph):
        self.kg = kg

    def relation_id(self, name: str) -> Optional[int]:
        return self.kg.relation_id(name) if self.kg.has_relation(name) else None

    def holds(self, head: int, rid: int, tail: int) -> bool:
        return self.kg.has_fact(Triple(head, rid, tail))

    def successors(self, eid: int, rid: Optional[int]) -> list[int]:
        return [] if rid is None else self.kg.successors(eid, rid)

    def predecessors(self, eid: int, rid: Optional[int]) -> list[int]:
        return [] if rid is None else self.kg.predecessors(eid, rid)


class ProbeFactOracle:
    """Graph candidates filtered through a ternary knowledge probe.

    Only facts the probe marks ``known`` count as provable; ``undecided``
    is treated as not known.  Verdicts are cached for the run.
    """

    kind = ORACLE_PROBE

    def __init__(self, kg: KnowledgeGraph, probe: Callable[[Triple], str]):
        self.kg = kg
        self._probe = probe
        self._cache: dict[Triple, bool] = {}

    def relation_id(self, name: str) -> Optional[int]:
        return self.kg.relation_id(name) if self.kg.has_relation(name) else None

    def _known(self, fact: Triple) -> bool:
        cached = self._cache.get(fact)
        if cached is None:
            cached = self._probe(fact) == VERDICT_KNOWN
            self._cache[fact] = cached
        return cached

    def holds(self, head: int, rid: int, tail: int) -> bool:
        fact = Triple(head, rid, tail)
        return self.kg.has_fact(fact) and self._known(fact)

    def successors(self, eid: int, rid: Optional[int]) -> list[int]:
        if rid is None:
            return []
        return [
            t for t in self.kg.successors(eid, rid) if self._known(Triple(eid, rid, t))
        ]

    def predecessors(self, eid: int, rid: Optional[int]) -> list[int]:
        if rid is None:
            return []
        return [
            h for h in self.kg.predecessors(eid, rid) if self._known(Triple(h, rid, eid))
        ]


def probe_from_client(kg: KnowledgeGraph, library: TemplateLibrary, client, name_of=None):
    """Adapt a model client into a Triple -> verdict callable."""
    if name_of is None:
        name_of = kg.entity_name
    def probe(fact: Triple) -> str:
        sentence = library.relation(kg.relation_name(fact.relation)).render(
            name_of(fact.head), name_of(fact.tail)
        )
        return client.probe_fact(sentence)
    return probe


# ----------------------------------------------------------------------
# trace structure

@dataclass(frozen=True)
class TryRule:
    rule: Rule


@dataclass(frozen=True)
class MissingFact:
    """One abandoned attempt: the chain could not be grounded.

    ``grounded`` is the contiguous entity chain established before the
    stall: it starts at X when walking forward, or ends at Y when walking
    backward.  ``atom_index`` is the 0-based body atom that failed.
    """

    rule: Rule
    atom_index: int
    grounded: tuple[int, ...]

    def missing_fact(self, known_side: str) -> tuple[Optional[int], str, Optional[int]]:
        relation = self.rule.body_relations[self.atom_index]
        if known_side == SIDE_SUBJECT:
            return self.grounded[-1], relation, None
        return None, relation, self.grounded[0]


@dataclass(frozen=True)
class Conclude:
    rule: Rule
    entities: tuple[int, ...]
    answer: int


@dataclass(frozen=True)
class ExplorationTrace:
    """Ordered record of one exploration run.

    ``known_side`` names the chain end that was given: ``subject`` walks
    forward from X toward Y, ``object`` backward from Y toward X.
    """

    head_relation: str
    known: int
    known_side: str
    steps: tuple
    outcome: str

    @property
    def trials(self) -> int:
        return sum(1 for s in self.steps if isinstance(s, TryRule))

    @property
    def error_count(self) -> int:
        return sum(1 for s in self.steps if isinstance(s, MissingFact))

    @property
    def rendered_hops(self) -> int:
        return sum(s.rule.hop for s in self.steps if isinstance(s, TryRule))

    @property
    def conclusion(self) -> Optional[Conclude]:
        for step in reversed(self.steps):
            if isinstance(step, Conclude):
                return step
        return None

    def entity_ids(self) -> set[int]:
        """Every entity the trace mentions when rendered or serialized."""
        seen = {self.known}
        for step in self.steps:
            if isinstance(step, MissingFact):
                seen.update(step.grounded)
            elif isinstance(step, Conclude):
                seen.update(step.entities)
        return seen

    def to_record(self, name_of: Callable[[int], str]) -> dict:
        steps = []
        for step in self.steps:
            if isinstance(step, TryRule):
                steps.append({"type": "try_rule", "rule": step.rule.rule_id})
            elif isinstance(step, MissingFact):
                subject, relation, obj = step.missing_fact(self.known_side)
                prefix = _grounded_facts(step.rule, step.grounded, self.known_side)
                steps.append(
                    {
                        "type": "missing_fact",
                        "rule": step.rule.rule_id,
                        "atom_index": step.atom_index,
                        "fact": [
                            name_of(subject) if subject is not None else None,
                            relation,
                            name_of(obj) if obj is not None else None,
                        ],
                        "prefix": [
                            [name_of(a), rel, name_of(b)] for a, rel, b in prefix
                        ],
                    }
                )
            elif isinstance(step, Conclude):
                steps.append(
                    {
                        "type": "conclude",
                        "rule": step.rule.rule_id,
                        "entities": [name_of(e) for e in step.entities],
                        "answer": name_of(step.answer),
                    }
                )
        return {"steps": steps, "outcome": self.outcome}


def _grounded_facts(
    rule: Rule, grounded: tuple[int, ...], known_side: str
) -> list[tuple[int, str, int]]:
    """(subject, relation, object) chain facts established before a stall."""
    k = len(grounded) - 1
    if known_side == SIDE_SUBJECT:
        rels = rule.body_relations[:k]
        ents = grounded
    else:
        rels = rule.body_relations[rule.hop - k :]
        ents = grounded
    return [(ents[i], rel, ents[i + 1]) for i, rel in enumerate(rels)]


# ----------------------------------------------------------------------
# candidate ordering and the exploration loop

def order_candidates(
    library: Iterable[RuleStats],
    head_relation: str,
    policy: Optional[Callable[[RuleStats], tuple]] = None,
) -> list[Rule]:
    """Candidates for a head relation: most confident first, then fewest
    hops, then canonical encoding."""
    if policy is None:
        def policy(st: RuleStats) -> tuple:
            conf = st.confidence if st.confidence is not None else Fraction(-1)
            return (-conf, st.rule.hop, st.rule.rule_id)
    matching = [st for st in library if st.rule.head_relation == head_relation]
    matching.sort(key=policy)
    return [st.rule for st in matching]


def _ground_chain(rule: Rule, known: int, known_side: str, oracle):
    """Find the canonically first full grounding of the body chain.

    Returns (entities tuple, None) on success or (None, MissingFact) when
    no grounding exists.  The recorded stall is the deepest point reached on
    the canonical-first path, so the cited missing fact is genuinely
    unprovable from its grounded prefix.
    """
    rel_ids = [oracle.relation_id(name) for name in rule.body_relations]
    hop = rule.hop
    forward = known_side == SIDE_SUBJECT

    best_depth = -1
    best_chain: tuple[int, ...] = (known,)

    def step_candidates(chain: tuple[int, ...], depth: int) -> list[int]:
        if forward:
            return oracle.successors(chain[-1], rel_ids[depth])
        return oracle.predecessors(chain[0], rel_ids[hop - 1 - depth])

    def dfs(chain: tuple[int, ...], depth: int) -> Optional[tuple[int, ...]]:
        nonlocal best_depth, best_chain
        if depth == hop:
            return chain
        nexts = step_candidates(chain, depth)
        if not nexts:
            if depth > best_depth:
                best_depth = depth
                best_chain = chain
            return None
        for nxt in nexts:
            extended = chain + (nxt,) if forward else (nxt,) + chain
            found = dfs(extended, depth + 1)
            if found is not None:
                return found
        return None

    solution = dfs((known,), 0)
    if solution is not None:
        return solution, None
    atom_index = best_depth if forward else hop - 1 - best_depth
    return None, MissingFact(rule=rule, atom_index=atom_index, grounded=best_chain)


def explore(
    head_relation: str,
    known: int,
    known_side: str,
    candidates: Sequence[Rule],
    oracle,
    max_trials: Optional[int] = None,
) -> ExplorationTrace:
    """Try candidate rules in order until one concludes or trials run out."""
    if known_side not in (SIDE_SUBJECT, SIDE_OBJECT):
        raise UsageError(f"known side must be subject or object: {known_side!r}")
    for rule in candidates:
        if rule.head_relation != head_relation:
            raise UsageError(
                f"candidate {rule.rule_id} does not answer {head_relation!r}"
            )
    cap = len(candidates) if max_trials is None else max_trials
    if cap < 0:
        raise UsageError(f"max trials must be >= 0, got {max_trials}")
    steps: list = []
    for rule in candidates[:cap]:
        steps.append(TryRule(rule))
        solution, failure = _ground_chain(rule, known, known_side, oracle)
        if solution is not None:
            answer = solution[-1] if known_side == SIDE_SUBJECT else solution[0]
            steps.append(Conclude(rule=rule, entities=solution, answer=answer))
            return ExplorationTrace(
                head_relation, known, known_side, tuple(steps), OUTCOME_SUCCESS
            )
        steps.append(failure)
    return ExplorationTrace(
        head_relation, known, known_side, tuple(steps), OUTCOME_EXHAUSTED
    )


def synthesize_trace(
    head_relation: str,
    known: int,
    known_side: str,
    candidates: Sequence[Rule],
    oracle,
    max_trials: Optional[int] = None,
    ensure_error: bool = True,
) -> ExplorationTrace:
    """Exploration for training data, preferring traces that show recovery.

    When both an unsupported and a supported candidate exist for the query,
    one unsupported candidate is deliberately placed first so the trace
    demonstrates an error followed by a successful switch.  With no
    unsupported candidate the trace is error free; with no supported one
    the exploration exhausts as usual.
    """
    if not ensure_error:
        return explore(head_relation, known, known_side, candidates, oracle, max_trials)
    supported: list[Rule] = []
    unsupported: list[Rule] = []
    for rule in candidates:
        solution, _ = _ground_chain(rule, known, known_side, oracle)
        (supported if solution is not None else unsupported).append(rule)
    if supported and unsupported:
        ordering: Sequence[Rule] = [unsupported[0], *supported]
    else:
        ordering = candidates
    return explore(head_relation, known, known_side, ordering, oracle, max_trials)


# ----------------------------------------------------------------------
# rendering

TRY_FIRST = "To find the answer, we can follow the reasoning path: {formula}."
TRY_NEXT = "Let's consider a different path: {formula}."
NOT_APPLICABLE = "since we are unsure of {what}, this path is not applicable."


def _missing_phrase(
    step: MissingFact, known_side: str, name_of: Callable[[int], str]
) -> str:
    subject, relation, obj = step.missing_fact(known_side)
    phrase = relation.replace("_", " ")
    if subject is not None:
        return f"{name_of(subject)}'s {phrase}"
    return f"which entity is linked to {name_of(obj)} by {phrase}"


def render_trace(
    trace: ExplorationTrace,
    library: TemplateLibrary,
    name_of: Callable[[int], str],
) -> str:
    """Reasoning text for a successful trace.

    A trace with no errors renders exactly like the plain chain answer for
    its concluding rule.  Traces with errors narrate each abandoned path
    before the successful one.
    """
    if trace.outcome != OUTCOME_SUCCESS:
        raise UsageError("only successful traces can be rendered")
    conclude = trace.conclusion
    assert conclude is not None

    def conclusion_part() -> str:
        sentences = chain_sentences(
            conclude.rule.body_relations, conclude.entities, library, name_of
        )
        tail = conclusion_text(
            conclude.rule.head_relation,
            conclude.entities[0],
            conclude.entities[-1],
            conclude.answer,
            library,
            name_of,
        )
        return " ".join(sentences + [tail])

    if trace.error_count == 0:
        return conclusion_part()

    parts: list[str] = []
    first = True
    for step in trace.steps:
        if isinstance(step, TryRule):
            tpl = TRY_FIRST if first else TRY_NEXT
            parts.append(tpl.format(formula=step.rule.formula()))
            first = False
        elif isinstance(step, MissingFact):
            phrase = NOT_APPLICABLE.format(
                what=_missing_phrase(step, trace.known_side, name_of)
            )
            grounded = _grounded_facts(step.rule, step.grounded, trace.known_side)
            if grounded:
                sentences = [
                    library.relation(rel).render(name_of(a), name_of(b))
                    for a, rel, b in grounded
                ]
                lead = " ".join(sentences).rstrip(".")
                parts.append(f"{lead}, but {phrase}")
            else:
                parts.append(phrase[0].upper() + phrase[1:])
        else:
            parts.append(conclusion_part())
    return " ".join(parts)


# ----------------------------------------------------------------------
# trial-and-error samples over a pool

def explore_samples(
    kg: KnowledgeGraph,
    pool: SelectionPool,
    library: TemplateLibrary,
    rule_library: Sequence[RuleStats],
    oracle,
    max_trials: Optional[int] = None,
    ensure_error: bool = True,
    polisher=None,
) -> tuple[list[ReasoningSample], dict[str, int], dict[int, str]]:
    """Run the agent over every queryable pool instance.

    Each sample keeps the instance's golden entity as reference answer and
    embeds the serialized trace.  Instances whose exploration exhausts are
    skipped and counted.

    Exploration can wander through entities the selection pool never
    touched.  When the pool carries a synthetic-name map, those entities
    get freshly minted names before rendering; the third return value is
    that extension (empty when nothing was minted) so callers can persist
    it alongside the original map.
    """
    skipped_ambiguous = 0
    skipped_exhausted = 0
    error_traces = 0
    by_head: dict[str, list[Rule]] = {}
    explored: list[tuple[RuleInstance, str, int, ExplorationTrace]] = []
    for inst in pool.instances():
        side = select_query_side(kg, inst.rule.head_atom, inst.bindings)
        if side == QUERY_SKIP:
            skipped_ambiguous += 1
            continue
        head_rel = inst.rule.head_relation
        candidates = by_head.get(head_rel)
        if candidates is None:
            candidates = order_candidates(rule_library, head_rel)
            by_head[head_rel] = candidates
        known, asked = query_entities(inst, side)
        known_side = SIDE_SUBJECT if side == SIDE_OBJECT else SIDE_OBJECT
        trace = synthesize_trace(
            head_rel, known, known_side, candidates, oracle, max_trials, ensure_error
        )
        if trace.outcome != OUTCOME_SUCCESS:
            skipped_exhausted += 1
            continue
        if trace.error_count > 0:
            error_traces += 1
        explored.append((inst, side, asked, trace))

    minted: dict[int, str] = {}
    if pool.name_map:
        mentioned: set[int] = set()
        for _inst, _side, asked, trace in explored:
            mentioned.add(asked)
            mentioned.update(trace.entity_ids())
        pool, minted = extend_name_map(pool, kg, sorted(mentioned))
    name_of = lambda e: pool.display_name(kg, e)  # noqa: E731

    samples: list[ReasoningSample] = []
    for inst, side, asked, trace in explored:
        text = render_trace(trace, library, name_of)
        if polisher is not None:
            conclude = trace.conclusion
            required = [name_of(e) for e in conclude.entities]
            text = validated_polish(polisher, text, required)
        question = render_question(
            inst, library.question(inst.rule.head_relation, side), name_of
        )
        samples.append(
            ReasoningSample(
                sample_id=sample_id_for(
                    f"{pool.setting}-trial",
                    inst.rule.rule_id,
                    [kg.entity_name(e) for e in inst.entities],
                    side,
                ),
                setting=pool.setting,
                hop=inst.rule.hop,
                rule_id=inst.rule.rule_id,
                question=question,
                answer=text,
                golden_entity=name_of(asked),
                trace=trace.to_record(name_of),
            )
        )
    samples.sort(key=lambda s: s.sample_id)
    counts = {
        "samples": len(samples),
        "skipped_ambiguous": skipped_ambiguous,
        "skipped_exhausted": skipped_exhausted,
        "error_traces": error_traces,
        "minted_names": len(minted),
    }
    return samples, counts, minted
