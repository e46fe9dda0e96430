"""Word-by-word annotated gloss: analysis + dictionary lookups for each token."""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import EmptyInputError
from .fst import (
    DEFAULT_EPSILON_CAP,
    DEFAULT_MAX_ANALYSES,
    Analysis,
    MorphologyConfig,
    Transducer,
    analysis_from_raw,
    apply_up,
    rank_analyses,
)
from .lexicon import (
    DEFAULT_K,
    Entry,
    Lexicon,
    MatchKind,
    MatchResult,
    TraversalConfig,
    collect_related,
    resolve,
)
from .orthography import RuleSet, normalize


@dataclass(frozen=True)
class GlossConfig:
    k: int = DEFAULT_K
    suffixes: tuple[str, ...] = ()
    traversal: TraversalConfig = field(default_factory=TraversalConfig)
    morphology: MorphologyConfig = field(default_factory=MorphologyConfig)
    max_analyses: int = DEFAULT_MAX_ANALYSES
    epsilon_cap: int = DEFAULT_EPSILON_CAP


@dataclass(frozen=True)
class Lookup:
    query: str
    matches: tuple[MatchResult, ...]
    related: tuple[Entry, ...] = ()

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "matches": [m.to_dict() for m in self.matches],
            "related": [e.to_dict() for e in self.related],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Lookup":
        return cls(
            d["query"],
            tuple(MatchResult.from_dict(m) for m in d["matches"]),
            tuple(Entry.from_dict(e) for e in d["related"]),
        )


@dataclass(frozen=True)
class WordGloss:
    surface: str
    analyses: tuple[Analysis, ...] = ()
    lookups: tuple[Lookup, ...] = ()

    @property
    def is_punctuation(self) -> bool:
        return is_punctuation(self.surface)

    @property
    def has_exact_match(self) -> bool:
        return any(m.match_kind is MatchKind.EXACT for lk in self.lookups for m in lk.matches)

    def to_dict(self) -> dict:
        return {
            "surface": self.surface,
            "analyses": [a.raw for a in self.analyses],
            "lookups": [lk.to_dict() for lk in self.lookups],
        }


@dataclass(frozen=True)
class GlossLine:
    source_sentence: str
    words: tuple[WordGloss, ...] = ()

    def to_dict(self) -> dict:
        return {"source_sentence": self.source_sentence, "words": [w.to_dict() for w in self.words]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping, morphology: MorphologyConfig | None = None) -> "GlossLine":
        morphology = morphology or MorphologyConfig()
        words = tuple(
            WordGloss(
                w["surface"],
                tuple(analysis_from_raw(raw, morphology) for raw in w["analyses"]),
                tuple(Lookup.from_dict(lk) for lk in w["lookups"]),
            )
            for w in d["words"]
        )
        return cls(d["source_sentence"], words)


def is_punctuation(token: str) -> bool:
    return bool(token) and all(unicodedata.category(c).startswith("P") for c in token)


def tokenize(sentence: str) -> list[str]:
    """Split on whitespace, then peel punctuation off token edges one character at a time.

    Word-internal punctuation such as the apostrophe in ``ts'ax`` stays.
    """
    tokens = []
    for chunk in sentence.split():
        start, end = 0, len(chunk)
        while start < end and unicodedata.category(chunk[start]).startswith("P"):
            start += 1
        if start == end:
            tokens.extend(chunk)
            continue
        while unicodedata.category(chunk[end - 1]).startswith("P"):
            end -= 1
        tokens.extend(chunk[:start])
        tokens.append(chunk[start:end])
        tokens.extend(chunk[end:])
    return tokens


def _related_for(lex: Lexicon, matches: Sequence[MatchResult], cfg: TraversalConfig) -> tuple[Entry, ...]:
    if not cfg.enabled:
        return ()
    matched = {m.entry for m in matches}
    related: list[Entry] = []
    for m in matches:
        for e in collect_related(lex, m, cfg):
            if e not in matched and e not in related:
                related.append(e)
    return tuple(related[: cfg.max_entries])


def _lookup(lex: Lexicon, word: str, stem: str | None, cfg: GlossConfig) -> Lookup:
    matches = resolve(lex, word, stem=stem, suffixes=cfg.suffixes, k=cfg.k)
    return Lookup(stem or word, tuple(matches), _related_for(lex, matches, cfg.traversal))


def gloss_word(word: str, transducer: Transducer | None, lex: Lexicon, cfg: GlossConfig) -> WordGloss:
    if is_punctuation(word):
        return WordGloss(word)
    analyses: list[Analysis] = []
    if transducer is not None:
        found = apply_up(transducer, word, cfg.morphology, cfg.epsilon_cap)
        analyses = rank_analyses(found)[: cfg.max_analyses]
    stems: list[str] = []
    for a in analyses:
        for s in a.stems:
            if s not in stems:
                stems.append(s)
    if stems:
        lookups = tuple(_lookup(lex, word, s, cfg) for s in stems)
    else:
        lookups = (_lookup(lex, word, None, cfg),)
    return WordGloss(word, tuple(analyses), lookups)


def gloss_sentence(
    sentence: str,
    transducer: Transducer | None,
    lex: Lexicon,
    rules: RuleSet | None = None,
    cfg: GlossConfig | None = None,
) -> GlossLine:
    if not sentence or not sentence.strip():
        raise EmptyInputError("cannot gloss an empty sentence")
    cfg = cfg or GlossConfig()
    normalized = normalize(sentence, rules or RuleSet())
    words = tuple(gloss_word(tok, transducer, lex, cfg) for tok in tokenize(normalized))
    return GlossLine(normalized, words)


def render_gloss(g: GlossLine) -> str:
    """Plain-text block, one section per token, sections separated by a blank line."""
    sections = []
    for w in g.words:
        lines = [w.surface]
        lines.extend(f"analysis: {a.raw}" for a in w.analyses)
        for lk in w.lookups:
            for m in lk.matches:
                lines.append(f"{lk.query}: {m.matched_headword} ({m.distance}) = {'; '.join(m.entry.definitions)}")
            lines.extend(f"related: {e.headword} = {e.definitions[0]}" for e in lk.related)
        sections.append("\n".join(lines))
    return "\n\n".join(sections)


def gloss_coverage(lines: Sequence[GlossLine]) -> float:
    """Fraction of non-punctuation tokens with at least one exact dictionary match."""
    words = [w for g in lines for w in g.words if not w.is_punctuation]
    if not words:
        return 0.0
    return sum(w.has_exact_match for w in words) / len(words)
