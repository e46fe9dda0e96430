"""Dictionary storage, the exact/suffix/fuzzy lookup cascade and cross-reference traversal."""

from __future__ import annotations

import enum
import io
import json
import logging
from collections import deque
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence, TextIO

from .errors import EmptyLexiconError, ParseError
from .orthography import RuleSet, nfc, normalize

log = logging.getLogger(__name__)

DEFAULT_K = 3
DEFAULT_MAX_RELATED = 10


@dataclass(frozen=True)
class Entry:
    headword: str
    definitions: tuple[str, ...]
    pos: str | None = None
    see_also: tuple[str, ...] = ()
    notes: str | None = None

    def __post_init__(self) -> None:
        if not self.headword:
            raise ValueError("entry with empty headword")
        if not self.definitions:
            raise ValueError(f"entry {self.headword!r} has no definitions")

    def to_dict(self) -> dict:
        d: dict = {"headword": self.headword}
        if self.pos is not None:
            d["pos"] = self.pos
        d["definitions"] = list(self.definitions)
        if self.see_also:
            d["see_also"] = list(self.see_also)
        if self.notes is not None:
            d["notes"] = self.notes
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Entry":
        return cls(
            headword=d["headword"],
            definitions=tuple(d["definitions"]),
            pos=d.get("pos"),
            see_also=tuple(d.get("see_also", ())),
            notes=d.get("notes"),
        )


@dataclass(frozen=True)
class Lexicon:
    """Headword -> entries (homographs allowed). Immutable once built.

    An empty lexicon can be produced by masking; only loading rejects one.
    """

    entries: Mapping[str, tuple[Entry, ...]]
    language: str = ""
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", MappingProxyType(dict(self.entries)))

    @classmethod
    def from_entries(cls, entries: Iterable[Entry], language: str = "") -> "Lexicon":
        index: dict[str, list[Entry]] = {}
        for e in entries:
            index.setdefault(e.headword, []).append(e)
        lex = cls({h: tuple(es) for h, es in index.items()}, language)
        object.__setattr__(lex, "warnings", tuple(dangling_links(lex)))
        return lex

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, headword: object) -> bool:
        return headword in self.entries

    def get(self, headword: str) -> tuple[Entry, ...]:
        return self.entries.get(headword, ())

    def headwords(self) -> list[str]:
        return list(self.entries)

    def all_entries(self) -> list[Entry]:
        return [e for es in self.entries.values() for e in es]

    def replace(self, entries: Mapping[str, tuple[Entry, ...]]) -> "Lexicon":
        return Lexicon(entries, self.language, tuple(dangling_links_in(entries)))


def dangling_links(lex: Lexicon) -> list[str]:
    return dangling_links_in(lex.entries)


def dangling_links_in(entries: Mapping[str, tuple[Entry, ...]]) -> list[str]:
    out = []
    for headword, es in entries.items():
        for e in es:
            for target in e.see_also:
                if target not in entries:
                    out.append(f"{headword!r} refers to missing entry {target!r}")
    return out


def _require(cond: bool, message: str, lineno: int, name: str | None) -> None:
    if not cond:
        raise ParseError(message, lineno, name)


def _is_str_list(value: object) -> bool:
    return isinstance(value, list) and all(isinstance(v, str) for v in value)


def load_lexicon(source: TextIO | str | Iterable[str], language: str = "", name: str | None = None) -> Lexicon:
    """Read JSONL entries: ``headword``, ``definitions`` required; ``pos``, ``see_also``, ``notes`` optional."""
    if isinstance(source, str):
        source = io.StringIO(source)
    entries = []
    for lineno, line in enumerate(source, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", lineno, name) from None
        _require(isinstance(obj, dict), "entry must be a JSON object", lineno, name)
        headword = obj.get("headword")
        _require(isinstance(headword, str) and bool(headword.strip()), "missing or empty 'headword'", lineno, name)
        defs = obj.get("definitions")
        _require(_is_str_list(defs) and len(defs) > 0, "'definitions' must be a non-empty list of strings", lineno, name)
        see_also = obj.get("see_also", [])
        _require(_is_str_list(see_also), "'see_also' must be a list of strings", lineno, name)
        for key in ("pos", "notes"):
            _require(obj.get(key) is None or isinstance(obj[key], str), f"'{key}' must be a string", lineno, name)
        entries.append(
            Entry(
                headword=nfc(headword),
                definitions=tuple(defs),
                pos=obj.get("pos"),
                see_also=tuple(nfc(s) for s in see_also),
                notes=obj.get("notes"),
            )
        )
    if not entries:
        raise EmptyLexiconError(f"{name or 'lexicon'} has no entries")
    lex = Lexicon.from_entries(entries, language)
    for w in lex.warnings:
        log.warning("%s", w)
    return lex


def normalize_lexicon(lex: Lexicon, rules: RuleSet) -> Lexicon:
    """Rewrite headwords and cross-references into the script ``rules`` produce."""
    if not rules.rules:
        return lex
    entries = []
    for e in lex.all_entries():
        entries.append(
            Entry(
                headword=normalize(e.headword, rules),
                definitions=e.definitions,
                pos=e.pos,
                see_also=tuple(normalize(s, rules) for s in e.see_also),
                notes=e.notes,
            )
        )
    return Lexicon.from_entries(entries, lex.language)


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over Unicode scalars (NFC)."""
    a, b = nfc(a), nfc(b)
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (ca != cb),
                )
            )
        previous = current
    return previous[-1]


class MatchKind(enum.Enum):
    EXACT = "exact"
    SUFFIX_STRIPPED = "suffix-stripped"
    FUZZY = "fuzzy"


@dataclass(frozen=True)
class MatchResult:
    query: str
    matched_headword: str
    entry: Entry
    distance: int
    match_kind: MatchKind

    def __post_init__(self) -> None:
        if self.match_kind is MatchKind.EXACT and self.distance != 0:
            raise ValueError("exact match must have distance 0")

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "matched_headword": self.matched_headword,
            "entry": self.entry.to_dict(),
            "distance": self.distance,
            "match_kind": self.match_kind.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MatchResult":
        return cls(
            query=d["query"],
            matched_headword=d["matched_headword"],
            entry=Entry.from_dict(d["entry"]),
            distance=d["distance"],
            match_kind=MatchKind(d["match_kind"]),
        )


@dataclass(frozen=True)
class TraversalConfig:
    max_entries: int = DEFAULT_MAX_RELATED
    enabled: bool = True

    def __post_init__(self) -> None:
        if self.max_entries < 1:
            raise ValueError("max_entries must be >= 1")


def _matches(lex: Lexicon, query: str, headword: str, distance: int, kind: MatchKind) -> list[MatchResult]:
    return [MatchResult(query, headword, e, distance, kind) for e in lex.get(headword)]


def strip_suffix(query: str, suffixes: Sequence[str]) -> str | None:
    """Strip the longest applicable suffix (list order breaks length ties)."""
    for suffix in sorted(suffixes, key=len, reverse=True):
        if suffix and query.endswith(suffix) and len(query) > len(suffix):
            return query[: -len(suffix)]
    return None


def resolve(
    lex: Lexicon,
    word: str,
    stem: str | None = None,
    suffixes: Sequence[str] = (),
    k: int = DEFAULT_K,
) -> list[MatchResult]:
    """Look ``stem`` (or ``word`` when no stem) up: exact, then suffix-stripped, then fuzzy.

    The fuzzy stage returns the ``k`` closest headwords plus every headword
    tied in distance with the k-th, ordered by (distance, length, headword).
    Each homograph is its own result.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    query = nfc(stem if stem else word)
    if query in lex:
        return _matches(lex, query, query, 0, MatchKind.EXACT)

    stripped = strip_suffix(query, suffixes)
    if stripped is not None and stripped in lex:
        return _matches(lex, query, stripped, levenshtein(query, stripped), MatchKind.SUFFIX_STRIPPED)

    if not len(lex):
        return []
    scored = sorted((levenshtein(query, h), len(h), h) for h in lex.headwords())
    cutoff = scored[min(k, len(scored)) - 1][0]
    results = []
    for distance, _, headword in scored:
        if distance > cutoff:
            break
        results.extend(_matches(lex, query, headword, distance, MatchKind.FUZZY))
    return results


def collect_related(lex: Lexicon, seed: MatchResult | Entry, cfg: TraversalConfig | None = None) -> list[Entry]:
    """Breadth-first walk over ``see_also`` links from ``seed``.

    The seed headword itself is never returned. Stops once ``max_entries``
    entries are found or nothing is left to visit; missing targets are skipped.
    """
    cfg = cfg or TraversalConfig()
    if not cfg.enabled:
        return []
    entry = seed.entry if isinstance(seed, MatchResult) else seed
    found: list[Entry] = []
    visited = {entry.headword}
    queue: deque[Entry] = deque([entry])
    while queue:
        current = queue.popleft()
        for target in current.see_also:
            if target in visited:
                continue
            visited.add(target)
            for e in lex.get(target):
                found.append(e)
                if len(found) >= cfg.max_entries:
                    return found
                queue.append(e)
    return found
