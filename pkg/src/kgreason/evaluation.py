"""Evaluation of model outputs against generated samples.

Raw outputs are parsed mechanically: the predicted entity comes from the
terminal answer sentence (falling back to the last known entity mention),
the final attempted rule from the last rule formula in the text (falling
back to the relation sequence of the parsed fact chain), and the fact
chain from relation template matches after that formula.

Verdicts partition predictions into correct answers, wrong rule choices,
chains resting on absent facts, and valid alternatives (sound rule, true
facts, different entity).  Outputs with no extractable entity are counted
unparseable and score as wrong.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import DataError, UsageError
from .generation import ReasoningSample
from .kg import KnowledgeGraph
from .rules import Rule, RuleStats
from .seeding import derive_seed
from .templates import TemplateLibrary, name_alternation

SPLIT_ID = "ID"
SPLIT_OOD = "OOD"

VERDICT_CORRECT = "correct"
VERDICT_RULE_ERROR = "rule_error"
VERDICT_FACT_ERROR = "fact_error"
VERDICT_VALID_ALTERNATIVE = "valid_alternative"
VERDICT_UNPARSEABLE = "unparseable"


def normalize_entity(name: str) -> str:
    """Case and whitespace insensitive form used for all equality checks."""
    return " ".join(name.split()).casefold()


# ----------------------------------------------------------------------
# splits

@dataclass(frozen=True)
class EvalSplit:
    """A named bucket of samples: ID/OOD, overall or one hop count."""

    name: str
    hop: Optional[int]
    samples: tuple[ReasoningSample, ...]

    @property
    def key(self) -> str:
        return f"{self.name}-all" if self.hop is None else f"{self.name}-{self.hop}hop"


def build_splits(
    samples: Sequence[ReasoningSample],
    training_rule_ids: Iterable[str],
    hops: Sequence[int] = (2, 3, 4),
    per_bucket: Optional[int] = None,
    seed: int = 0,
) -> list[EvalSplit]:
    """Partition samples into ID/OOD by rule membership, bucketed by hop.

    ID means the sample's rule is in the training rule set.  Buckets can be
    capped at ``per_bucket`` samples with a seeded uniform subsample; the
    overall split is the union of its (capped) hop buckets.
    """
    training = set(training_rule_ids)
    for sample in samples:
        if not sample.rule_id:
            raise DataError(f"sample {sample.sample_id} has no rule id")
    groups = {
        SPLIT_ID: [s for s in samples if s.rule_id in training],
        SPLIT_OOD: [s for s in samples if s.rule_id not in training],
    }
    splits: list[EvalSplit] = []
    for name, group in groups.items():
        overall: list[ReasoningSample] = []
        hop_splits: list[EvalSplit] = []
        for hop in hops:
            bucket = [s for s in group if s.hop == hop]
            if per_bucket is not None and len(bucket) > per_bucket:
                rng = random.Random(derive_seed(seed, "split", name, str(hop)))
                bucket = rng.sample(bucket, per_bucket)
                bucket.sort(key=lambda s: s.sample_id)
            hop_splits.append(EvalSplit(name, hop, tuple(bucket)))
            overall.extend(bucket)
        splits.append(EvalSplit(name, None, tuple(overall)))
        splits.extend(hop_splits)
    return splits


# ----------------------------------------------------------------------
# parsing raw outputs

_ANSWER_PATTERNS = (
    r"(?P<name>{alt})\s+is\s+the\s+(?:correct\s+)?answer",
    r"the\s+answer\s+is\s*:?\s*(?P<name>{alt})",
)


@dataclass(frozen=True)
class ParsedPrediction:
    """Structured view of one raw output."""

    raw: str
    predicted: Optional[str]
    final_rule_id: Optional[str]
    facts: tuple[tuple[str, str, str], ...]

    @property
    def parseable(self) -> bool:
        return self.predicted is not None

    @property
    def final_hop(self) -> Optional[int]:
        if self.final_rule_id is not None:
            return Rule.decode(self.final_rule_id).hop
        return len(self.facts) if self.facts else None


class OutputParser:
    """Compiled matcher over a fixed entity name set and template library."""

    def __init__(
        self,
        relations: Iterable[str],
        names: Iterable[str],
        library: TemplateLibrary,
        rule_formulas: Optional[Mapping[str, str]] = None,
    ):
        self._alt = name_alternation(names)
        self._name_regex = re.compile(self._alt)
        self._answer_regexes = [
            re.compile(p.format(alt=self._alt), re.IGNORECASE)
            for p in _ANSWER_PATTERNS
        ]
        self._fact_regexes = {
            rel: library.relation(rel).to_regex(self._alt)
            for rel in sorted(set(relations))
        }
        self._formulas = dict(rule_formulas or {})

    def extract_prediction(self, raw: str) -> Optional[str]:
        """Predicted entity: terminal answer pattern, else last known name."""
        best: Optional[tuple[int, str]] = None
        for regex in self._answer_regexes:
            for m in regex.finditer(raw):
                if best is None or m.start() >= best[0]:
                    best = (m.start(), m.group("name"))
        if best is not None:
            return best[1]
        last = None
        for m in self._name_regex.finditer(raw):
            last = m.group(0)
        return last

    def find_facts(self, text: str) -> list[tuple[str, str, str]]:
        """Template matches as (subject, relation, object), by position.

        Matches from different relations may overlap: a sentence like
        "A has cast member B, who speaks C" states two facts sharing the
        pivot mention of B, and both must survive.
        """
        hits: list[tuple[int, int, tuple[str, str, str]]] = []
        for rel, regex in sorted(self._fact_regexes.items()):
            for m in regex.finditer(text):
                hits.append((m.start(), m.end(), (m.group("e1"), rel, m.group("e2"))))
        hits.sort()
        return [fact for _, _, fact in hits]

    def parse(self, raw: str) -> ParsedPrediction:
        final_rule_id = None
        tail_start = 0
        for rule_id, formula in self._formulas.items():
            pos = raw.rfind(formula)
            if pos >= 0 and pos + len(formula) >= tail_start:
                tail_start = pos + len(formula)
                final_rule_id = rule_id
        return ParsedPrediction(
            raw=raw,
            predicted=self.extract_prediction(raw),
            final_rule_id=final_rule_id,
            facts=tuple(self.find_facts(raw[tail_start:])),
        )


def extract_prediction(raw: str, names: Iterable[str]) -> Optional[str]:
    """One-off extraction without building a full parser by hand."""
    parser = OutputParser([], names, TemplateLibrary())
    return parser.extract_prediction(raw)


# ----------------------------------------------------------------------
# scoring

@dataclass(frozen=True)
class MatchScore:
    correct: int
    total: int

    @property
    def score(self) -> float:
        return self.correct / self.total

    @property
    def exact(self) -> Fraction:
        return Fraction(self.correct, self.total)

    @property
    def percent(self) -> str:
        return f"{100 * self.correct / self.total:.2f}"


def exact_match_score(
    predictions: Mapping[str, Optional[str]], split: EvalSplit
) -> MatchScore:
    """Correct predictions over split size.  Missing or unparsed outputs
    count as wrong.  An empty split cannot be scored."""
    if not split.samples:
        raise UsageError(f"split {split.key} is empty")
    correct = 0
    for sample in split.samples:
        predicted = predictions.get(sample.sample_id)
        if predicted is not None and normalize_entity(predicted) == normalize_entity(
            sample.golden_entity
        ):
            correct += 1
    return MatchScore(correct=correct, total=len(split.samples))


def rule_length_usage(
    parsed: Mapping[str, ParsedPrediction]
) -> tuple[dict[int, float], int]:
    """Share of outputs whose final attempted rule has each hop count.

    Outputs with no determinable final rule are excluded from the
    denominator and returned as the second element.
    """
    hops: list[int] = []
    unparseable = 0
    for pp in parsed.values():
        hop = pp.final_hop
        if hop is None:
            unparseable += 1
        else:
            hops.append(hop)
    if not hops:
        return {}, unparseable
    total = len(hops)
    out = {hop: hops.count(hop) / total for hop in sorted(set(hops))}
    return out, unparseable


# ----------------------------------------------------------------------
# error classification

@dataclass(frozen=True)
class Verdict:
    kind: str
    fact_indices: tuple[int, ...] = field(default=())

    @property
    def label(self) -> str:
        if self.kind == VERDICT_FACT_ERROR:
            return f"{VERDICT_FACT_ERROR}:{self.fact_indices[0]}"
        return self.kind


def classify_error(
    parsed: ParsedPrediction,
    sample: ReasoningSample,
    kg: KnowledgeGraph,
    valid_rules: Iterable[Rule],
    name_to_id: Optional[Mapping[str, int]] = None,
) -> Verdict:
    """Assign exactly one verdict to a parsed prediction.

    Order of tests: unparseable, correct, wrong rule, first absent fact
    (all absent positions are reported, 1-based), else valid alternative.
    """
    if parsed.predicted is None:
        return Verdict(VERDICT_UNPARSEABLE)
    if normalize_entity(parsed.predicted) == normalize_entity(sample.golden_entity):
        return Verdict(VERDICT_CORRECT)
    head_relation = Rule.decode(sample.rule_id).head_relation
    valid_ids = {
        r.rule_id for r in valid_rules if r.head_relation == head_relation
    }
    if parsed.final_rule_id is not None:
        final_rule_id = parsed.final_rule_id
    elif parsed.facts:
        final_rule_id = Rule(
            head_relation, tuple(rel for _, rel, _ in parsed.facts)
        ).rule_id
    else:
        final_rule_id = None
    if final_rule_id is None or final_rule_id not in valid_ids:
        return Verdict(VERDICT_RULE_ERROR)

    def resolve(name: str) -> Optional[int]:
        if name_to_id is not None and name in name_to_id:
            return name_to_id[name]
        return kg.entity_id(name) if kg.has_entity(name) else None

    absent: list[int] = []
    for index, (subj, rel, obj) in enumerate(parsed.facts, start=1):
        s = resolve(subj)
        o = resolve(obj)
        if (
            s is None
            or o is None
            or not kg.has_relation(rel)
            or not kg.has_fact_ids(s, kg.relation_id(rel), o)
        ):
            absent.append(index)
    if absent:
        return Verdict(VERDICT_FACT_ERROR, tuple(absent))
    return Verdict(VERDICT_VALID_ALTERNATIVE)


# ----------------------------------------------------------------------
# report

@dataclass
class SplitResult:
    split_key: str
    samples: int
    match: MatchScore
    usage: dict[int, float]
    usage_unparseable: int
    verdicts: dict[str, int]

    def to_record(self) -> dict:
        return {
            "split": self.split_key,
            "samples": self.samples,
            "exact_match": {
                "correct": self.match.correct,
                "total": self.match.total,
                "percent": self.match.percent,
            },
            "rule_length_usage": {str(h): round(p, 4) for h, p in self.usage.items()},
            "usage_unparseable": self.usage_unparseable,
            "verdicts": dict(sorted(self.verdicts.items())),
        }


@dataclass
class EvalReport:
    results: list[SplitResult]

    def to_json(self) -> str:
        return json.dumps(
            {"splits": [r.to_record() for r in self.results]},
            indent=2,
            sort_keys=True,
            ensure_ascii=False,
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    def render_table(self) -> str:
        lines = [
            f"{'split':<12} {'n':>6} {'EM%':>8} {'usage by hop':<24} verdicts",
            "-" * 78,
        ]
        for r in self.results:
            usage = " ".join(f"{h}:{p:.2%}" for h, p in sorted(r.usage.items()))
            verdicts = " ".join(f"{k}={v}" for k, v in sorted(r.verdicts.items()))
            lines.append(
                f"{r.split_key:<12} {r.samples:>6} {r.match.percent:>8} "
                f"{usage:<24} {verdicts}"
            )
        return "\n".join(lines)


class Evaluator:
    """End-to-end evaluation over raw prediction texts."""

    def __init__(
        self,
        kg: KnowledgeGraph,
        library_stats: Sequence[RuleStats],
        templates: TemplateLibrary,
        extra_names: Optional[Mapping[str, int]] = None,
    ):
        self.kg = kg
        self.stats = list(library_stats)
        self.templates = templates
        self.extra_names = dict(extra_names or {})
        names = list(kg.entity_names()) + list(self.extra_names)
        self.name_to_id = {name: kg.entity_id(name) for name in kg.entity_names()}
        self.name_to_id.update(self.extra_names)
        self.parser = OutputParser(
            kg.relation_names(),
            names,
            templates,
            {st.rule.rule_id: st.rule.formula() for st in self.stats},
        )
        self.valid_rules = [st.rule for st in self.stats]

    def parse(self, raw: str) -> ParsedPrediction:
        return self.parser.parse(raw)

    def classify(self, parsed: ParsedPrediction, sample: ReasoningSample) -> Verdict:
        return classify_error(
            parsed, sample, self.kg, self.valid_rules, self.name_to_id
        )

    def evaluate(
        self, splits: Sequence[EvalSplit], outputs: Mapping[str, str]
    ) -> EvalReport:
        parsed_cache: dict[str, ParsedPrediction] = {
            sid: self.parse(raw) for sid, raw in outputs.items()
        }
        results = []
        for split in splits:
            if not split.samples:
                continue
            predictions = {
                s.sample_id: (
                    parsed_cache[s.sample_id].predicted
                    if s.sample_id in parsed_cache
                    else None
                )
                for s in split.samples
            }
            verdict_counts: dict[str, int] = {}
            split_parsed: dict[str, ParsedPrediction] = {}
            for sample in split.samples:
                pp = parsed_cache.get(sample.sample_id)
                if pp is None:
                    pp = ParsedPrediction(raw="", predicted=None, final_rule_id=None, facts=())
                split_parsed[sample.sample_id] = pp
                verdict = self.classify(pp, sample)
                verdict_counts[verdict.label] = verdict_counts.get(verdict.label, 0) + 1
            usage, usage_unparseable = rule_length_usage(split_parsed)
            results.append(
                SplitResult(
                    split_key=split.key,
                    samples=len(split.samples),
                    match=exact_match_score(predictions, split),
                    usage=usage,
                    usage_unparseable=usage_unparseable,
                    verdicts=verdict_counts,
                )
            )
        return EvalReport(results)


# ----------------------------------------------------------------------
# predictions file

def write_predictions(path: str | Path, outputs: Mapping[str, str]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for sid in sorted(outputs):
            fh.write(
                json.dumps(
                    {"id": sid, "output": outputs[sid]},
                    separators=(",", ":"),
                    ensure_ascii=False,
                )
            )
            fh.write("\n")
            count += 1
    return count


def read_predictions(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                out[record["id"]] = record["output"]
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}: bad prediction on line {line_no}") from exc
    return out
