"""Finite-state transducer runtime: load AT&T tabular text and apply it upward.

The file format is the tabular one written by foma/hfst::

    @sym	+Noun          multicharacter symbol declaration (before first use)
    0	1	c	c          src, dst, input, output
    3	4	s	+Noun
    4	5	@0@	+Plural    @0@ is epsilon
    5                      final state

The source state of the first transition is the start state. Lines starting
with ``#`` are comments. A trailing weight column is tolerated and ignored.
"""

from __future__ import annotations

import enum
import io
import logging
from collections import deque
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, TextIO

from .errors import ParseError, ValidationError

log = logging.getLogger(__name__)

EPSILON = "@0@"
IDENTITY = "@_IDENTITY_SYMBOL_@"
_ESCAPES = {"@_SPACE_@": " ", "@_TAB_@": "\t"}

DEFAULT_EPSILON_CAP = 32
DEFAULT_MAX_ANALYSES = 8


class SymbolKind(enum.Enum):
    ORDINARY = "ordinary"
    EPSILON = "epsilon"
    IDENTITY = "unknown-identity"


@dataclass(frozen=True)
class Symbol:
    text: str
    kind: SymbolKind = SymbolKind.ORDINARY

    @classmethod
    def parse(cls, raw: str) -> "Symbol":
        if raw == EPSILON:
            return cls("", SymbolKind.EPSILON)
        if raw == IDENTITY:
            return cls("", SymbolKind.IDENTITY)
        return cls(_ESCAPES.get(raw, raw))

    @property
    def is_epsilon(self) -> bool:
        return self.kind is SymbolKind.EPSILON

    @property
    def is_identity(self) -> bool:
        return self.kind is SymbolKind.IDENTITY

    def __str__(self) -> str:
        if self.is_epsilon:
            return EPSILON
        if self.is_identity:
            return IDENTITY
        return self.text


@dataclass(frozen=True)
class Transition:
    src: int
    dst: int
    input: Symbol
    output: Symbol


@dataclass(frozen=True)
class Transducer:
    """An immutable, validated transducer. Safe to share between threads."""

    states: frozenset[int]
    start: int
    finals: frozenset[int]
    transitions: tuple[Transition, ...]
    sigma: frozenset[str]
    warnings: tuple[str, ...] = ()
    _arcs: Mapping[int, tuple[Transition, ...]] = field(
        init=False, repr=False, compare=False, default=MappingProxyType({})
    )

    def __post_init__(self) -> None:
        if self.start not in self.states:
            raise ValidationError(f"start state {self.start} is not a state")
        if not self.finals <= self.states:
            raise ValidationError(f"final states {sorted(self.finals - self.states)} are not states")
        arcs: dict[int, list[Transition]] = {}
        for t in self.transitions:
            if t.src not in self.states or t.dst not in self.states:
                raise ValidationError(f"transition {t.src}->{t.dst} references an unknown state")
            for sym in (t.input, t.output):
                if sym.kind is SymbolKind.ORDINARY and sym.text not in self.sigma:
                    raise ValidationError(f"symbol {sym.text!r} is not in the alphabet")
            if t.output.is_identity and not t.input.is_identity:
                raise ValidationError("identity output requires identity input")
            arcs.setdefault(t.src, []).append(t)
        object.__setattr__(self, "_arcs", MappingProxyType({q: tuple(ts) for q, ts in arcs.items()}))

    def arcs(self, state: int) -> tuple[Transition, ...]:
        return self._arcs.get(state, ())


def _split_fields(line: str) -> list[str]:
    return line.split("\t")


def load_transducer(source: TextIO | str | Iterable[str], name: str | None = None) -> Transducer:
    """Parse AT&T tabular text into a :class:`Transducer`.

    ``source`` may be an open text stream, a string holding the whole file,
    or any iterable of lines.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    declared: set[str] = set()
    sigma: set[str] = set()
    transitions: list[Transition] = []
    finals: set[int] = set()
    states: set[int] = set()
    start: int | None = None

    def state_id(text: str, lineno: int) -> int:
        try:
            value = int(text)
        except ValueError:
            raise ParseError(f"state id {text!r} is not an integer", lineno, name) from None
        if value < 0:
            raise ParseError(f"negative state id {value}", lineno, name)
        return value

    def symbol(raw: str, lineno: int) -> Symbol:
        if raw == "":
            raise ParseError("empty symbol field", lineno, name)
        sym = Symbol.parse(raw)
        if sym.kind is SymbolKind.ORDINARY:
            if len(sym.text) > 1 and sym.text not in declared:
                raise ValidationError(
                    f"{name + ':' if name else ''}{lineno}: multicharacter symbol {sym.text!r} used before declaration"
                )
            sigma.add(sym.text)
        return sym

    for lineno, line in enumerate(source, start=1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = _split_fields(line)
        if fields[0] == "@sym":
            if len(fields) != 2 or not fields[1]:
                raise ParseError("malformed @sym declaration", lineno, name)
            text = _ESCAPES.get(fields[1], fields[1])
            declared.add(text)
            sigma.add(text)
            continue
        if len(fields) in (1, 2):
            if len(fields) == 2:
                _check_weight(fields[1], lineno, name)
            q = state_id(fields[0], lineno)
            finals.add(q)
            states.add(q)
        elif len(fields) in (4, 5):
            if len(fields) == 5:
                _check_weight(fields[4], lineno, name)
            src, dst = state_id(fields[0], lineno), state_id(fields[1], lineno)
            t = Transition(src, dst, symbol(fields[2], lineno), symbol(fields[3], lineno))
            if start is None:
                start = src
            transitions.append(t)
            states.update((src, dst))
        else:
            raise ParseError(f"expected 1, 2, 4 or 5 tab-separated fields, got {len(fields)}", lineno, name)

    if start is None:
        raise ParseError("no transitions: cannot determine the start state", None, name)

    warnings = tuple(_unreachable_final_warnings(start, finals, transitions))
    for w in warnings:
        log.warning("%s%s", f"{name}: " if name else "", w)
    return Transducer(
        states=frozenset(states),
        start=start,
        finals=frozenset(finals),
        transitions=tuple(transitions),
        sigma=frozenset(sigma),
        warnings=warnings,
    )


def _check_weight(text: str, lineno: int, name: str | None) -> None:
    try:
        float(text)
    except ValueError:
        raise ParseError(f"weight {text!r} is not a number", lineno, name) from None


def _unreachable_final_warnings(start: int, finals: set[int], transitions: list[Transition]) -> Iterator[str]:
    succ: dict[int, set[int]] = {}
    for t in transitions:
        succ.setdefault(t.src, set()).add(t.dst)
    seen = {start}
    queue = deque([start])
    while queue:
        q = queue.popleft()
        for r in succ.get(q, ()):
            if r not in seen:
                seen.add(r)
                queue.append(r)
    for q in sorted(finals - seen):
        yield f"final state {q} is unreachable from start state {start}"


class MorphemeRole(enum.Enum):
    STEM = "stem"
    FEATURE = "feature"


@dataclass(frozen=True)
class Morpheme:
    text: str
    role: MorphemeRole

    @property
    def is_feature(self) -> bool:
        return self.role is MorphemeRole.FEATURE


@dataclass(frozen=True)
class Analysis:
    morphemes: tuple[Morpheme, ...]
    raw: str
    # output symbols of the path that produced this analysis
    symbols: tuple[str, ...] = field(default=(), compare=False, repr=False)

    @property
    def stems(self) -> list[str]:
        return [m.text for m in self.morphemes if not m.is_feature]

    @property
    def features(self) -> list[str]:
        return [m.text for m in self.morphemes if m.is_feature]


@dataclass(frozen=True)
class MorphologyConfig:
    """Per-language conventions for turning analyzer output into morphemes.

    A morpheme is a feature when it starts with ``feature_prefix`` (e.g.
    ``+Noun``) or is listed in ``feature_tags`` (e.g. ``PASS``, ``1PL``).
    Output symbols in ``boundaries`` separate morphemes and are dropped.
    """

    joiner: str = " "
    feature_prefix: str = "+"
    feature_tags: frozenset[str] = frozenset()
    boundaries: frozenset[str] = frozenset({"-"})

    def is_feature(self, text: str) -> bool:
        if text in self.feature_tags:
            return True
        prefix = self.feature_prefix
        return bool(prefix) and text.startswith(prefix) and len(text) > len(prefix)

    def morpheme(self, text: str) -> Morpheme:
        return Morpheme(text, MorphemeRole.FEATURE if self.is_feature(text) else MorphemeRole.STEM)


def split_morphemes(symbols: Iterable[str], cfg: MorphologyConfig) -> list[Morpheme]:
    parts: list[str] = []
    current: list[str] = []

    def flush() -> None:
        if current:
            parts.append("".join(current))
            current.clear()

    for sym in symbols:
        if sym in cfg.boundaries:
            flush()
        elif len(sym) > 1 and cfg.is_feature(sym):
            flush()
            parts.append(sym)
        elif sym == cfg.feature_prefix:
            # a bare "+" opens a feature spelled out one character at a time
            flush()
            current.append(sym)
        else:
            current.append(sym)
    flush()
    return [cfg.morpheme(p) for p in parts]


def make_analysis(symbols: Iterable[str], cfg: MorphologyConfig) -> Analysis | None:
    symbols = tuple(symbols)
    morphemes = split_morphemes(symbols, cfg)
    if not morphemes:
        return None
    return Analysis(tuple(morphemes), cfg.joiner.join(m.text for m in morphemes), symbols)


def analysis_from_raw(raw: str, cfg: MorphologyConfig) -> Analysis:
    """Build an analysis from an already-joined string such as ``sg̲a-sgi-PASS-1PL``."""
    texts = [p for p in raw.split(cfg.joiner) if p] if cfg.joiner else [raw]
    if not texts:
        raise ValueError("analysis has no morphemes")
    morphemes = tuple(cfg.morpheme(t) for t in texts)
    return Analysis(morphemes, cfg.joiner.join(texts), tuple(texts))


def accepting_outputs(
    t: Transducer, word: str, epsilon_cap: int = DEFAULT_EPSILON_CAP
) -> Iterator[tuple[str, ...]]:
    """Yield the output symbol sequence of every accepting path reading ``word``.

    Depth-first; a path may not revisit the same (state, position) pair
    without consuming input, and runs of more than ``epsilon_cap``
    consecutive epsilon-input transitions are cut.
    """
    n = len(word)
    # (state, position, outputs, epsilon run length, (state, position) pairs seen in this run)
    stack: list[tuple[int, int, tuple[str, ...], int, frozenset[tuple[int, int]]]] = [
        (t.start, 0, (), 0, frozenset({(t.start, 0)}))
    ]
    while stack:
        q, pos, out, run, seen = stack.pop()
        if pos == n and q in t.finals:
            yield out
        successors = []
        for arc in t.arcs(q):
            isym, osym = arc.input, arc.output
            if isym.is_epsilon:
                key = (arc.dst, pos)
                if run >= epsilon_cap or key in seen:
                    continue
                emitted = () if osym.is_epsilon else (osym.text,)
                successors.append((arc.dst, pos, out + emitted, run + 1, seen | {key}))
                continue
            if isym.is_identity:
                if pos >= n or word[pos] in t.sigma:
                    continue
                consumed = word[pos]
                step = 1
                emitted_text = consumed if osym.is_identity else osym.text
            else:
                if not word.startswith(isym.text, pos):
                    continue
                step = len(isym.text)
                emitted_text = osym.text
            emitted = () if osym.is_epsilon else (emitted_text,)
            new_pos = pos + step
            successors.append((arc.dst, new_pos, out + emitted, 0, frozenset({(arc.dst, new_pos)})))
        stack.extend(reversed(successors))


def apply_up(
    t: Transducer,
    word: str,
    cfg: MorphologyConfig | None = None,
    epsilon_cap: int = DEFAULT_EPSILON_CAP,
) -> list[Analysis]:
    """Return every distinct analysis of ``word``; ``[]`` when it is not accepted."""
    if not word:
        return []
    cfg = cfg or MorphologyConfig()
    seen: set[str] = set()
    results = []
    for out in accepting_outputs(t, word, epsilon_cap):
        analysis = make_analysis(out, cfg)
        if analysis is None or analysis.raw in seen:
            continue
        seen.add(analysis.raw)
        results.append(analysis)
    return results


def rank_analyses(analyses: Iterable[Analysis]) -> list[Analysis]:
    """Fewest morphemes first, ties broken by the raw string."""
    return sorted(analyses, key=lambda a: (len(a.morphemes), a.raw))
