"""In-memory triple store with interned entity and relation ids.

Entities and relations are interned to dense integer ids assigned in sorted
name order after the whole input has been read.  That makes every query
result independent of the order triples arrive in.  The store is built once,
single threaded, and is immutable afterwards; all query methods are safe to
call from multiple threads.

Triple files are UTF-8 text, one fact per line, with exactly three
tab-separated fields: head entity, relation, tail entity.  Duplicate lines
collapse into one fact.  Blank lines are ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DataError, IngestError, UnknownSymbolError, UsageError

FORWARD = "forward"
INVERSE = "inverse"

STORE_FORMAT_VERSION = 1


@dataclass(frozen=True, order=True)
class Triple:
    """One fact, all three fields as interned ids."""

    head: int
    relation: int
    tail: int


class KnowledgeGraph:
    """Immutable triple store with forward and inverse adjacency indices."""

    __slots__ = (
        "_entity_names",
        "_relation_names",
        "_entity_ids",
        "_relation_ids",
        "_triples",
        "_fwd",
        "_inv",
        "_fwd_rel",
        "_inv_rel",
        "_rel_pairs",
    )

    def __init__(
        self,
        entity_names: Iterable[str],
        relation_names: Iterable[str],
        name_triples: Iterable[tuple[str, str, str]],
    ):
        # Names are sorted before id assignment so ids never depend on the
        # order facts were read in.  The name lists may contain entities that
        # appear in no triple (they round-trip through saved stores).
        self._entity_names: list[str] = sorted(set(entity_names))
        self._relation_names: list[str] = sorted(set(relation_names))
        self._entity_ids = {name: i for i, name in enumerate(self._entity_names)}
        self._relation_ids = {name: i for i, name in enumerate(self._relation_names)}

        triples: set[Triple] = set()
        for h, r, t in name_triples:
            try:
                triples.add(
                    Triple(self._entity_ids[h], self._relation_ids[r], self._entity_ids[t])
                )
            except KeyError as exc:  # pragma: no cover - constructor misuse
                raise UnknownSymbolError(f"symbol not in name tables: {exc}") from exc
        self._triples = triples

        fwd: dict[int, list[tuple[int, int]]] = {}
        inv: dict[int, list[tuple[int, int]]] = {}
        fwd_rel: dict[tuple[int, int], list[int]] = {}
        inv_rel: dict[tuple[int, int], list[int]] = {}
        rel_pairs: dict[int, list[tuple[int, int]]] = {}
        for t in triples:
            fwd.setdefault(t.head, []).append((t.relation, t.tail))
            inv.setdefault(t.tail, []).append((t.relation, t.head))
            fwd_rel.setdefault((t.head, t.relation), []).append(t.tail)
            inv_rel.setdefault((t.tail, t.relation), []).append(t.head)
            rel_pairs.setdefault(t.relation, []).append((t.head, t.tail))
        for lst in fwd.values():
            lst.sort()
        for lst in inv.values():
            lst.sort()
        for lst2 in fwd_rel.values():
            lst2.sort()
        for lst2 in inv_rel.values():
            lst2.sort()
        for lst3 in rel_pairs.values():
            lst3.sort()
        self._fwd = fwd
        self._inv = inv
        self._fwd_rel = fwd_rel
        self._inv_rel = inv_rel
        self._rel_pairs = rel_pairs

    # ------------------------------------------------------------------
    # construction

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "KnowledgeGraph":
        """Build a graph from triple lines, validating as we go.

        Raises IngestError (with the offending 1-based line number) when a
        non-blank line does not have exactly three tab-separated fields.
        """
        name_triples: list[tuple[str, str, str]] = []
        entities: set[str] = set()
        relations: set[str] = set()
        for line_no, raw in enumerate(lines, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise IngestError(
                    line_no, f"expected 3 tab-separated fields, got {len(fields)}"
                )
            h, r, t = fields
            if not h or not r or not t:
                raise IngestError(line_no, "empty field")
            name_triples.append((h, r, t))
            entities.add(h)
            entities.add(t)
            relations.add(r)
        return cls(entities, relations, name_triples)

    @classmethod
    def from_file(cls, path: str | Path) -> "KnowledgeGraph":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_lines(fh)

    # ------------------------------------------------------------------
    # vocabulary

    @property
    def num_entities(self) -> int:
        return len(self._entity_names)

    @property
    def num_relations(self) -> int:
        return len(self._relation_names)

    @property
    def num_triples(self) -> int:
        return len(self._triples)

    def entity_id(self, name: str) -> int:
        try:
            return self._entity_ids[name]
        except KeyError:
            raise UnknownSymbolError(f"unknown entity: {name!r}") from None

    def relation_id(self, name: str) -> int:
        try:
            return self._relation_ids[name]
        except KeyError:
            raise UnknownSymbolError(f"unknown relation: {name!r}") from None

    def entity_name(self, eid: int) -> str:
        self._check_entity(eid)
        return self._entity_names[eid]

    def relation_name(self, rid: int) -> str:
        self._check_relation(rid)
        return self._relation_names[rid]

    def has_entity(self, name: str) -> bool:
        return name in self._entity_ids

    def has_relation(self, name: str) -> bool:
        return name in self._relation_ids

    def entity_names(self) -> list[str]:
        return list(self._entity_names)

    def relation_names(self) -> list[str]:
        return list(self._relation_names)

    def _check_entity(self, eid: int) -> None:
        if not 0 <= eid < len(self._entity_names):
            raise UnknownSymbolError(f"entity id out of range: {eid}")

    def _check_relation(self, rid: int) -> None:
        if not 0 <= rid < len(self._relation_names):
            raise UnknownSymbolError(f"relation id out of range: {rid}")

    # ------------------------------------------------------------------
    # queries

    def has_fact(self, triple: Triple) -> bool:
        """Membership test.  Ids must be valid, otherwise UnknownSymbolError."""
        self._check_entity(triple.head)
        self._check_relation(triple.relation)
        self._check_entity(triple.tail)
        return triple in self._triples

    def has_fact_ids(self, head: int, relation: int, tail: int) -> bool:
        return self.has_fact(Triple(head, relation, tail))

    def has_fact_names(self, head: str, relation: str, tail: str) -> bool:
        return (
            Triple(self.entity_id(head), self.relation_id(relation), self.entity_id(tail))
            in self._triples
        )

    def neighbors(self, eid: int, direction: str = FORWARD) -> list[tuple[int, int]]:
        """Edges incident to ``eid`` as (relation id, other entity id) pairs.

        ``forward`` lists outgoing edges, ``inverse`` incoming ones.  Pairs
        come back in canonical order: ascending relation id, then entity id.
        """
        self._check_entity(eid)
        if direction == FORWARD:
            return list(self._fwd.get(eid, ()))
        if direction == INVERSE:
            return list(self._inv.get(eid, ()))
        raise UsageError(
            f"direction must be {FORWARD!r} or {INVERSE!r}, got {direction!r}"
        )

    def successors(self, eid: int, rid: int) -> list[int]:
        """Tails reachable from ``eid`` via relation ``rid``, ascending."""
        self._check_entity(eid)
        self._check_relation(rid)
        return list(self._fwd_rel.get((eid, rid), ()))

    def predecessors(self, eid: int, rid: int) -> list[int]:
        """Heads that reach ``eid`` via relation ``rid``, ascending."""
        self._check_entity(eid)
        self._check_relation(rid)
        return list(self._inv_rel.get((eid, rid), ()))

    def facts_of(self, eid: int) -> list[Triple]:
        """All facts where ``eid`` is head or tail, deduplicated.

        Self loops appear once.  Results are in canonical triple order
        (ascending head, relation, tail ids).  Isolated entities yield [].
        """
        self._check_entity(eid)
        seen: set[Triple] = set()
        for r, t in self._fwd.get(eid, ()):
            seen.add(Triple(eid, r, t))
        for r, h in self._inv.get(eid, ()):
            seen.add(Triple(h, r, eid))
        return sorted(seen)

    def relation_pairs(self, rid: int) -> list[tuple[int, int]]:
        """All (head, tail) entity pairs of a relation, ascending."""
        self._check_relation(rid)
        return list(self._rel_pairs.get(rid, ()))

    def triples(self) -> Iterator[Triple]:
        """All facts in canonical (head, relation, tail) order."""
        return iter(sorted(self._triples))

    def stats(self) -> dict[str, int]:
        return {
            "entities": self.num_entities,
            "relations": self.num_relations,
            "triples": self.num_triples,
        }

    # ------------------------------------------------------------------
    # persistence

    def save(self, path: str | Path) -> None:
        payload = {
            "format_version": STORE_FORMAT_VERSION,
            "entities": self._entity_names,
            "relations": self._relation_names,
            "triples": sorted([t.head, t.relation, t.tail] for t in self._triples),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, separators=(",", ":"), ensure_ascii=False)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "KnowledgeGraph":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"not a valid store file: {path}") from exc
        version = payload.get("format_version")
        if version != STORE_FORMAT_VERSION:
            raise DataError(
                f"unsupported store format version {version!r} in {path}"
            )
        entities = payload["entities"]
        relations = payload["relations"]
        graph = cls.__new__(cls)
        KnowledgeGraph.__init__(
            graph,
            entities,
            relations,
            [
                (entities[h], relations[r], entities[t])
                for h, r, t in payload["triples"]
            ],
        )
        return graph
