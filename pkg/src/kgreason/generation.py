"""Question, answer, and corpus generation from selected rule instances.

Questions are asked in possibility tone about whichever side of the head
fact has a unique answer in the graph.  Answers narrate the body facts in
chain order, hedge the conclusion, and end with a fixed terminal sentence
naming the golden entity, which downstream evaluation parses back out.
Every entity mention uses the pool's display name, so anonymized pools
render with synthetic names throughout.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

from .errors import DataError, TemplateError, UsageError
from .kg import KnowledgeGraph, Triple
from .rules import Atom, RuleInstance
from .seeding import derive_seed
from .selection import SelectionPool
from .templates import (
    SIDE_OBJECT,
    SIDE_SUBJECT,
    QuestionTemplate,
    TemplateLibrary,
)

logger = logging.getLogger(__name__)

QUERY_SKIP = "skip"

CORPUS_VERSIONS = 4
CORPUS_CHUNK_SIZE = 10

POLISH_INSTRUCTION = (
    "Rewrite the following text so it reads naturally. Keep every stated "
    "piece of information and do not alter what it says."
)

CONCLUSION_PREFIX = "Therefore, "
ANSWER_SENTENCE = "Thus, {name} is the answer."


def select_query_side(kg: KnowledgeGraph, head: Atom, bindings: dict[str, int]) -> str:
    """Decide which side of the grounded head fact to ask about.

    Ask for the object when the subject has exactly one object under the
    head relation; otherwise ask for the subject when it is the unique
    subject for that object; otherwise the instance is unusable for an
    unambiguous question and the result is ``skip``.
    """
    rid = kg.relation_id(head.relation)
    x = bindings[head.subject]
    y = bindings[head.object]
    if len(kg.successors(x, rid)) == 1:
        return SIDE_OBJECT
    if len(kg.predecessors(y, rid)) == 1:
        return SIDE_SUBJECT
    return QUERY_SKIP


def query_entities(instance: RuleInstance, side: str) -> tuple[int, int]:
    """(given entity, asked entity) ids for a chosen query side."""
    if side == SIDE_OBJECT:
        return instance.subject, instance.object
    if side == SIDE_SUBJECT:
        return instance.object, instance.subject
    raise UsageError(f"not a queryable side: {side!r}")


def render_question(
    instance: RuleInstance,
    template: QuestionTemplate,
    name_of: Callable[[int], str],
) -> str:
    """Fill the question template with the given entity's display name."""
    if template.relation != instance.rule.head_relation:
        raise TemplateError(
            f"question template is for {template.relation!r}, instance head "
            f"is {instance.rule.head_relation!r}"
        )
    given, _ = query_entities(instance, template.queried_side)
    return template.render(name_of(given))


def body_sentences(
    kg: KnowledgeGraph,
    facts: Iterable[Triple],
    library: TemplateLibrary,
    name_of: Callable[[int], str],
) -> list[str]:
    return [
        library.relation(kg.relation_name(f.relation)).render(
            name_of(f.head), name_of(f.tail)
        )
        for f in facts
    ]


def chain_sentences(
    relations: Iterable[str],
    entities: Iterable[int],
    library: TemplateLibrary,
    name_of: Callable[[int], str],
) -> list[str]:
    """Sentences for a grounded relation chain given by name, one per hop."""
    entities = list(entities)
    return [
        library.relation(rel).render(name_of(entities[i]), name_of(entities[i + 1]))
        for i, rel in enumerate(relations)
    ]


def conclusion_text(
    head_relation: str,
    subject: int,
    obj: int,
    answer: int,
    library: TemplateLibrary,
    name_of: Callable[[int], str],
) -> str:
    """Hedged conclusion plus the fixed terminal answer sentence."""
    clause = library.relation(head_relation).possibility_clause(
        name_of(subject), name_of(obj)
    )
    terminal = ANSWER_SENTENCE.format(name=name_of(answer))
    return f"{CONCLUSION_PREFIX}{clause}. {terminal}"


def validated_polish(polisher, text: str, required_names: Iterable[str]) -> str:
    """Run the polisher but fall back when any entity mention is lost."""
    if polisher is None:
        return text
    polished = polisher(POLISH_INSTRUCTION, text)
    missing = [name for name in required_names if name not in polished]
    if missing:
        logger.warning(
            "polished text dropped entity mentions %s; keeping original", missing
        )
        return text
    return polished


def render_chain_answer(
    kg: KnowledgeGraph,
    instance: RuleInstance,
    library: TemplateLibrary,
    name_of: Callable[[int], str],
    query_side: str = SIDE_OBJECT,
    polisher=None,
) -> str:
    """Body facts in chain order, hedged conclusion, terminal answer."""
    sentences = chain_sentences(
        instance.rule.body_relations, instance.entities, library, name_of
    )
    _, asked = query_entities(instance, query_side)
    tail = conclusion_text(
        instance.rule.head_relation,
        instance.subject,
        instance.object,
        asked,
        library,
        name_of,
    )
    text = " ".join(sentences + [tail])
    required = [name_of(e) for e in instance.entities]
    return validated_polish(polisher, text, required)


# ----------------------------------------------------------------------
# samples

@dataclass(frozen=True)
class ReasoningSample:
    """One question/answer pair, optionally carrying an exploration trace.

    ``trace`` is kept in its serialized record form so sample files round
    trip without the agent machinery.
    """

    sample_id: str
    setting: str
    hop: int
    rule_id: str
    question: str
    answer: str
    golden_entity: str
    trace: Optional[dict] = field(default=None)

    def to_record(self) -> dict:
        record = {
            "id": self.sample_id,
            "setting": self.setting,
            "hop": self.hop,
            "rule": self.rule_id,
            "question": self.question,
            "answer": self.answer,
            "golden": self.golden_entity,
        }
        if self.trace is not None:
            record["trace"] = self.trace
        return record

    @classmethod
    def from_record(cls, record: dict) -> "ReasoningSample":
        return cls(
            sample_id=record["id"],
            setting=record["setting"],
            hop=int(record["hop"]),
            rule_id=record["rule"],
            question=record["question"],
            answer=record["answer"],
            golden_entity=record["golden"],
            trace=record.get("trace"),
        )


def sample_id_for(setting: str, rule_id: str, entity_names: Iterable[str], side: str) -> str:
    key = "|".join([setting, rule_id, side, *entity_names])
    return hashlib.sha1(key.encode("utf-8")).hexdigest()[:12]


def make_samples(
    kg: KnowledgeGraph,
    pool: SelectionPool,
    library: TemplateLibrary,
    polisher=None,
) -> tuple[list[ReasoningSample], dict[str, int]]:
    """Plain chain samples for every unambiguously queryable pool instance.

    Returns the samples in canonical id order plus counters for skipped
    instances.
    """
    samples: list[ReasoningSample] = []
    skipped = 0
    for inst in pool.instances():
        name_of = lambda e: pool.display_name(kg, e)  # noqa: E731
        side = select_query_side(kg, inst.rule.head_atom, inst.bindings)
        if side == QUERY_SKIP:
            skipped += 1
            continue
        question = render_question(inst, library.question(inst.rule.head_relation, side), name_of)
        answer = render_chain_answer(
            kg, inst, library, name_of, query_side=side, polisher=polisher
        )
        _, asked = query_entities(inst, side)
        samples.append(
            ReasoningSample(
                sample_id=sample_id_for(
                    pool.setting,
                    inst.rule.rule_id,
                    [kg.entity_name(e) for e in inst.entities],
                    side,
                ),
                setting=pool.setting,
                hop=inst.rule.hop,
                rule_id=inst.rule.rule_id,
                question=question,
                answer=answer,
                golden_entity=name_of(asked),
            )
        )
    samples.sort(key=lambda s: s.sample_id)
    return samples, {"samples": len(samples), "skipped_ambiguous": skipped}


def write_samples(path: str | Path, samples: Iterable[ReasoningSample]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(
                json.dumps(sample.to_record(), separators=(",", ":"), ensure_ascii=False)
            )
            fh.write("\n")
            count += 1
    return count


def read_samples(path: str | Path) -> list[ReasoningSample]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(ReasoningSample.from_record(json.loads(line)))
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}: bad sample on line {line_no}") from exc
    return out


# ----------------------------------------------------------------------
# corpus

@dataclass(frozen=True)
class CorpusDoc:
    entity: str
    chunk: int
    version: int
    text: str
    source_facts: tuple[tuple[str, str, str], ...]

    def to_record(self) -> dict:
        return {
            "entity": self.entity,
            "chunk": self.chunk,
            "version": self.version,
            "text": self.text,
            "facts": [list(f) for f in self.source_facts],
        }


def build_corpus(
    kg: KnowledgeGraph,
    entity: int,
    entity_facts: list[Triple],
    library: TemplateLibrary,
    name_of: Callable[[int], str],
    seed: int,
    polisher=None,
) -> list[CorpusDoc]:
    """Entity-centric documents: facts chunked by ten, four seeded
    sentence-order versions per chunk."""
    display = name_of(entity)
    docs: list[CorpusDoc] = []
    ordered = sorted(entity_facts)
    for chunk_idx in range(0, max(1, len(ordered)), CORPUS_CHUNK_SIZE):
        chunk = ordered[chunk_idx : chunk_idx + CORPUS_CHUNK_SIZE]
        if not chunk:
            break
        sentences = body_sentences(kg, chunk, library, name_of)
        names = sorted(
            {name_of(f.head) for f in chunk} | {name_of(f.tail) for f in chunk}
        )
        for version in range(1, CORPUS_VERSIONS + 1):
            order = list(range(len(sentences)))
            random.Random(
                derive_seed(seed, "corpus", display, str(chunk_idx), str(version))
            ).shuffle(order)
            text = " ".join(sentences[i] for i in order)
            text = validated_polish(polisher, text, names)
            docs.append(
                CorpusDoc(
                    entity=display,
                    chunk=chunk_idx // CORPUS_CHUNK_SIZE,
                    version=version,
                    text=text,
                    source_facts=tuple(
                        (
                            kg.entity_name(f.head),
                            kg.relation_name(f.relation),
                            kg.entity_name(f.tail),
                        )
                        for f in chunk
                    ),
                )
            )
    return docs


def corpus_from_pool(
    kg: KnowledgeGraph,
    pool: SelectionPool,
    library: TemplateLibrary,
    seed: int,
    polisher=None,
) -> list[CorpusDoc]:
    """Documents covering the pooled body facts, grouped per entity.

    Head facts are deliberately not included: the corpus injects the
    prerequisite knowledge, never the answers themselves.
    """
    facts = sorted(pool.body_fact_union())
    by_entity: dict[int, list[Triple]] = {}
    for fact in facts:
        by_entity.setdefault(fact.head, []).append(fact)
        if fact.tail != fact.head:
            by_entity.setdefault(fact.tail, []).append(fact)
    name_of = lambda e: pool.display_name(kg, e)  # noqa: E731
    docs: list[CorpusDoc] = []
    for eid in sorted(by_entity):
        docs.extend(
            build_corpus(kg, eid, by_entity[eid], library, name_of, seed, polisher)
        )
    return docs


def write_corpus(path: str | Path, docs: Iterable[CorpusDoc]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_record(), separators=(",", ":"), ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count
