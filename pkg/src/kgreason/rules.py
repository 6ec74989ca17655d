"""Horn chain rules and their serialized form.

A rule has one head atom ``head(X, Y)`` and a body that is a single relation
chain ``r1(X, Z1), r2(Z1, Z2), ..., rn(Z_{n-1}, Y)``.  Because the chain
shape is fixed, a rule is fully determined by its head relation plus the
ordered tuple of body relations; variable names are derived from position
and always form the canonical sequence X, Z1, Z2, ..., Y.

The canonical textual encoding doubles as the rule id and as the sort tie
breaker everywhere ordered rule lists are produced.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional

from .errors import DataError, UsageError
from .kg import Triple

VAR_X = "X"
VAR_Y = "Y"

MIN_HOP = 1
DEFAULT_MAX_HOP = 4


def chain_vars(hop: int) -> tuple[str, ...]:
    """Canonical variable sequence for a chain of ``hop`` body atoms."""
    if hop < MIN_HOP:
        raise UsageError(f"hop must be >= {MIN_HOP}, got {hop}")
    return (VAR_X, *[f"Z{i}" for i in range(1, hop)], VAR_Y)


@dataclass(frozen=True)
class Atom:
    """A relation applied to two variables."""

    relation: str
    subject: str
    object: str

    def encode(self) -> str:
        return f"{self.relation}({self.subject},{self.object})"


@dataclass(frozen=True)
class Rule:
    """A chain rule, identified by head relation and body relation sequence."""

    head_relation: str
    body_relations: tuple[str, ...]

    def __post_init__(self):
        if not self.body_relations:
            raise UsageError("rule body must contain at least one atom")
        if not isinstance(self.body_relations, tuple):
            object.__setattr__(self, "body_relations", tuple(self.body_relations))

    @property
    def hop(self) -> int:
        return len(self.body_relations)

    @property
    def variables(self) -> tuple[str, ...]:
        return chain_vars(self.hop)

    @property
    def head_atom(self) -> Atom:
        return Atom(self.head_relation, VAR_X, VAR_Y)

    @property
    def body_atoms(self) -> tuple[Atom, ...]:
        names = self.variables
        return tuple(
            Atom(rel, names[i], names[i + 1])
            for i, rel in enumerate(self.body_relations)
        )

    @property
    def rule_id(self) -> str:
        """Compact canonical encoding, stable across runs on the same data."""
        body = "&".join(a.encode() for a in self.body_atoms)
        return f"{self.head_atom.encode()}<-{body}"

    def formula(self) -> str:
        """Readable rendering used inside generated reasoning text."""
        body = " & ".join(
            f"{a.relation}({a.subject}, {a.object})" for a in self.body_atoms
        )
        head = self.head_atom
        return f"{head.relation}({head.subject}, {head.object}) <- {body}"

    @classmethod
    def decode(cls, rule_id: str) -> "Rule":
        match = re.fullmatch(r"(.+)\(X,Y\)<-(.+)", rule_id)
        if not match:
            raise DataError(f"not a canonical rule encoding: {rule_id!r}")
        head_relation = match.group(1)
        body_relations = []
        for idx, atom_text in enumerate(match.group(2).split("&")):
            m = re.fullmatch(r"(.+)\(([A-Za-z0-9]+),([A-Za-z0-9]+)\)", atom_text)
            if not m:
                raise DataError(f"bad body atom in rule encoding: {atom_text!r}")
            body_relations.append(m.group(1))
        rule = cls(head_relation, tuple(body_relations))
        if rule.rule_id != rule_id:
            raise DataError(f"non-canonical rule encoding: {rule_id!r}")
        return rule


@dataclass(frozen=True)
class RuleStats:
    """A rule together with its grounding counts on one graph.

    ``body_count`` is the number of distinct full variable bindings that
    satisfy the body chain.  ``head_and_body_count`` is the subset of those
    whose head fact also holds; it equals ``instance_count`` because an
    instance is exactly a body grounding whose head fact is present.
    """

    rule: Rule
    instance_count: int
    body_count: int
    head_and_body_count: int

    @property
    def confidence(self) -> Optional[Fraction]:
        """Exact confidence, or None when the rule is unscorable (no bodies)."""
        if self.body_count == 0:
            return None
        return Fraction(self.head_and_body_count, self.body_count)

    @property
    def support(self) -> int:
        return self.instance_count


@dataclass(frozen=True)
class RuleInstance:
    """One grounding of a rule's body on a concrete graph.

    ``entities`` lists the bound entity ids in chain position order, so
    ``entities[0]`` is X and ``entities[-1]`` is Y.  ``head_fact`` is set
    exactly when the grounded head triple is present in the graph.
    """

    rule: Rule
    entities: tuple[int, ...]
    body_facts: tuple[Triple, ...]
    head_fact: Optional[Triple]

    @property
    def bindings(self) -> dict[str, int]:
        return dict(zip(self.rule.variables, self.entities))

    @property
    def subject(self) -> int:
        return self.entities[0]

    @property
    def object(self) -> int:
        return self.entities[-1]


# ----------------------------------------------------------------------
# rules file

def _confidence_key(stats: RuleStats) -> tuple:
    conf = stats.confidence
    if conf is None:
        conf = Fraction(-1)
    return (-conf, stats.rule.rule_id)


def sort_stats(stats: Iterable[RuleStats]) -> list[RuleStats]:
    """Descending confidence, ties broken by ascending rule encoding."""
    return sorted(stats, key=_confidence_key)


def write_rules(path: str | Path, stats: Iterable[RuleStats]) -> int:
    """Write one rule per line in the order given.  Returns the line count."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for st in stats:
            conf = st.confidence
            record = {
                "rule": st.rule.rule_id,
                "head": {
                    "relation": st.rule.head_relation,
                    "vars": list((st.rule.head_atom.subject, st.rule.head_atom.object)),
                },
                "body": [
                    {"relation": a.relation, "vars": [a.subject, a.object]}
                    for a in st.rule.body_atoms
                ],
                "hop": st.rule.hop,
                "support": st.support,
                "body_count": st.body_count,
                "confidence": float(conf) if conf is not None else None,
            }
            fh.write(json.dumps(record, separators=(",", ":"), ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count


def read_rules(path: str | Path) -> list[RuleStats]:
    """Load a rules file.  Confidence is recomputed exactly from the counts."""
    out: list[RuleStats] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                rule = Rule(
                    record["head"]["relation"],
                    tuple(a["relation"] for a in record["body"]),
                )
                stats = RuleStats(
                    rule=rule,
                    instance_count=int(record["support"]),
                    body_count=int(record["body_count"]),
                    head_and_body_count=int(record["support"]),
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}: bad rule record on line {line_no}") from exc
            if record.get("rule") not in (None, rule.rule_id):
                raise DataError(
                    f"{path}: rule id {record['rule']!r} does not match its atoms"
                )
            out.append(stats)
    return out
