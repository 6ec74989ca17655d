"""Verbalization templates for facts and questions.

A relation template turns one fact into one sentence via the ``<ENT1>`` and
``<ENT2>`` slots.  A question template has a single ``<ENT>`` slot for the
given entity and asks, in possibility tone, for the entity on the queried
side.  Templates can be hand written, loaded from a tab-separated file, or
requested from the model client once per relation; a deterministic fallback
is always available so offline runs never stall on a missing entry.

Fact sentences must be mechanically invertible: `to_regex` builds a pattern
that recovers both entity mentions, which powers answer parsing during
evaluation.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .errors import TemplateError
from .kg import KnowledgeGraph, Triple

logger = logging.getLogger(__name__)

ENT1 = "<ENT1>"
ENT2 = "<ENT2>"
ENT = "<ENT>"

SIDE_SUBJECT = "subject"
SIDE_OBJECT = "object"

TEMPLATE_INSTRUCTION = (
    "Write one short English sentence template expressing the relation "
    "below between two entities. Use the placeholders <ENT1> for the "
    "subject and <ENT2> for the object, each exactly once, and include "
    "the word 'is'."
)
QUESTION_INSTRUCTION = (
    "Write one short English question template asking which entity might "
    "stand in the relation below to a given entity. Use the placeholder "
    "<ENT> for the given entity exactly once and phrase the question with "
    "'might'."
)


def _phrase(relation: str) -> str:
    return relation.replace("_", " ")


@dataclass(frozen=True)
class RelationTemplate:
    relation: str
    pattern: str

    def __post_init__(self):
        for slot in (ENT1, ENT2):
            if self.pattern.count(slot) != 1:
                raise TemplateError(
                    f"relation template for {self.relation!r} must contain "
                    f"{slot} exactly once: {self.pattern!r}"
                )

    def render(self, subject_name: str, object_name: str) -> str:
        if not subject_name or not object_name:
            raise TemplateError("cannot render a fact with an empty entity name")
        return self.pattern.replace(ENT1, subject_name).replace(ENT2, object_name)

    def possibility_clause(self, subject_name: str, object_name: str) -> str:
        """Hedged variant of the sentence, for conclusions.

        Replacing the first " is " with " may be " keeps the clause out of
        reach of `to_regex`, so conclusions are never mistaken for stated
        facts when answers are parsed back.
        """
        sentence = self.render(subject_name, object_name).rstrip(".")
        if " is " in sentence:
            return sentence.replace(" is ", " may be ", 1)
        return (
            f"{object_name} may be the {_phrase(self.relation)} answer "
            f"for {subject_name}"
        )

    def to_regex(self, name_alternation: str) -> re.Pattern:
        """Regex recovering both entity mentions from a rendered sentence.

        ``name_alternation`` is a pre-built alternation over every entity
        surface form that may appear.  Trailing punctuation is dropped from
        the pattern so a fact is still found when the sentence continues
        with a clause ("... member B, who ...") instead of a full stop.
        """
        core = self.pattern.rstrip().rstrip(".!?")
        parts = re.split(f"({re.escape(ENT1)}|{re.escape(ENT2)})", core)
        regex = ""
        for part in parts:
            if part == ENT1:
                regex += f"(?P<e1>{name_alternation})"
            elif part == ENT2:
                regex += f"(?P<e2>{name_alternation})"
            else:
                regex += re.escape(part)
        return re.compile(regex + r"(?!\w)")


@dataclass(frozen=True)
class QuestionTemplate:
    relation: str
    queried_side: str
    pattern: str

    def __post_init__(self):
        if self.queried_side not in (SIDE_SUBJECT, SIDE_OBJECT):
            raise TemplateError(
                f"queried side must be subject or object: {self.queried_side!r}"
            )
        if self.pattern.count(ENT) != 1:
            raise TemplateError(
                f"question template for {self.relation!r} must contain {ENT} "
                f"exactly once: {self.pattern!r}"
            )

    def render(self, given_name: str) -> str:
        if not given_name:
            raise TemplateError("cannot render a question with an empty entity name")
        return self.pattern.replace(ENT, given_name)


# A small hand-written table for relations that commonly occur in general
# knowledge graphs.  Everything else falls back to a generic pattern.
BUILTIN_RELATIONS: dict[str, str] = {
    "citizen_of": f"{ENT1} is a citizen of {ENT2}.",
    "born_in": f"{ENT1} is born in {ENT2}.",
    "city_of": f"{ENT1} is a city of {ENT2}.",
    "capital_of": f"{ENT1} is the capital of {ENT2}.",
    "located_in": f"{ENT1} is located in {ENT2}.",
    "member_of": f"{ENT1} is a member of {ENT2}.",
    "part_of": f"{ENT1} is a part of {ENT2}.",
    "works_for": f"{ENT1} is an employee of {ENT2}.",
    "speaks": f"{ENT1} is a speaker of {ENT2}.",
    "head_coach": f"{ENT1} is the head coach of {ENT2}.",
    "from_country": f"{ENT1} is from the country {ENT2}.",
    "headquartered_in": f"{ENT1} has its headquarters situated in {ENT2}.",
}

BUILTIN_QUESTIONS: dict[tuple[str, str], str] = {
    ("citizen_of", SIDE_OBJECT): f"Which country might {ENT} be a citizen of?",
    ("citizen_of", SIDE_SUBJECT): f"Which person might be a citizen of {ENT}?",
    ("born_in", SIDE_OBJECT): f"Which place might {ENT} be born in?",
    ("capital_of", SIDE_OBJECT): f"Which country might {ENT} be the capital of?",
    ("capital_of", SIDE_SUBJECT): f"Which city might be the capital of {ENT}?",
}


def generic_relation_template(relation: str) -> RelationTemplate:
    return RelationTemplate(
        relation, f"{ENT1} is connected to {ENT2} through {_phrase(relation)}."
    )


def generic_question_template(relation: str, side: str) -> QuestionTemplate:
    phrase = _phrase(relation)
    if side == SIDE_OBJECT:
        pattern = f"Which entity might {ENT} be linked to by {phrase}?"
    else:
        pattern = f"Which entity might be linked to {ENT} by {phrase}?"
    return QuestionTemplate(relation, side, pattern)


class TemplateLibrary:
    """Lookup of relation and question templates with generic fallback."""

    def __init__(
        self,
        relations: Optional[Iterable[RelationTemplate]] = None,
        questions: Optional[Iterable[QuestionTemplate]] = None,
        allow_fallback: bool = True,
    ):
        self._relations: dict[str, RelationTemplate] = {}
        self._questions: dict[tuple[str, str], QuestionTemplate] = {}
        self.allow_fallback = allow_fallback
        for rt in relations or ():
            self._relations[rt.relation] = rt
        for qt in questions or ():
            self._questions[(qt.relation, qt.queried_side)] = qt

    @classmethod
    def builtin(cls) -> "TemplateLibrary":
        return cls(
            [RelationTemplate(rel, pat) for rel, pat in BUILTIN_RELATIONS.items()],
            [
                QuestionTemplate(rel, side, pat)
                for (rel, side), pat in BUILTIN_QUESTIONS.items()
            ],
        )

    def add_relation(self, template: RelationTemplate) -> None:
        self._relations[template.relation] = template

    def add_question(self, template: QuestionTemplate) -> None:
        self._questions[(template.relation, template.queried_side)] = template

    def relation(self, relation: str) -> RelationTemplate:
        found = self._relations.get(relation)
        if found is not None:
            return found
        if not self.allow_fallback:
            raise TemplateError(f"no template for relation {relation!r}")
        return generic_relation_template(relation)

    def question(self, relation: str, side: str) -> QuestionTemplate:
        found = self._questions.get((relation, side))
        if found is not None:
            return found
        if not self.allow_fallback:
            raise TemplateError(
                f"no question template for relation {relation!r}, side {side!r}"
            )
        return generic_question_template(relation, side)

    def known_relations(self) -> list[str]:
        return sorted(self._relations)

    def render_fact(self, kg: KnowledgeGraph, fact: Triple, name_of) -> str:
        return self.relation(kg.relation_name(fact.relation)).render(
            name_of(fact.head), name_of(fact.tail)
        )

    # ------------------------------------------------------------------
    # persistence: editable two and three column tab-separated files

    def save(self, relations_path: str | Path, questions_path: str | Path) -> None:
        with open(relations_path, "w", encoding="utf-8") as fh:
            for rel in sorted(self._relations):
                fh.write(f"{rel}\t{self._relations[rel].pattern}\n")
        with open(questions_path, "w", encoding="utf-8") as fh:
            for rel, side in sorted(self._questions):
                fh.write(f"{rel}\t{side}\t{self._questions[(rel, side)].pattern}\n")

    @classmethod
    def load(
        cls,
        relations_path: str | Path,
        questions_path: Optional[str | Path] = None,
        allow_fallback: bool = True,
    ) -> "TemplateLibrary":
        lib = cls(allow_fallback=allow_fallback)
        with open(relations_path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                fields = line.split("\t")
                if len(fields) != 2:
                    raise TemplateError(
                        f"{relations_path}: expected 2 fields on line {line_no}"
                    )
                lib.add_relation(RelationTemplate(fields[0], fields[1]))
        if questions_path is not None:
            with open(questions_path, "r", encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    line = line.rstrip("\n")
                    if not line:
                        continue
                    fields = line.split("\t")
                    if len(fields) != 3:
                        raise TemplateError(
                            f"{questions_path}: expected 3 fields on line {line_no}"
                        )
                    lib.add_question(QuestionTemplate(fields[0], fields[1], fields[2]))
        return lib


def generate_templates(relations: Iterable[str], client) -> TemplateLibrary:
    """Ask the model client for templates, one relation at a time.

    Replies that fail validation (wrong slots, empty) fall back to the
    generic pattern, so the result is always usable.  With a mock client
    the reply is the echoed prompt, which never validates, and the library
    ends up fully generic and fully deterministic.
    """
    lib = TemplateLibrary.builtin()
    for relation in sorted(set(relations)):
        reply = client.polish(TEMPLATE_INSTRUCTION, f"relation: {relation}")
        try:
            lib.add_relation(RelationTemplate(relation, reply.strip()))
        except TemplateError:
            lib.add_relation(generic_relation_template(relation))
        for side in (SIDE_SUBJECT, SIDE_OBJECT):
            q_reply = client.polish(
                QUESTION_INSTRUCTION, f"relation: {relation} (asking the {side})"
            )
            try:
                lib.add_question(QuestionTemplate(relation, side, q_reply.strip()))
            except TemplateError:
                lib.add_question(generic_question_template(relation, side))
    return lib


def name_alternation(names: Iterable[str]) -> str:
    """Alternation over entity surface forms, longest first, word-bounded."""
    ordered = sorted(set(names), key=lambda s: (-len(s), s))
    if not ordered:
        return r"(?!x)x"  # matches nothing
    joined = "|".join(re.escape(n) for n in ordered)
    return rf"(?<!\w)(?:{joined})(?!\w)"
