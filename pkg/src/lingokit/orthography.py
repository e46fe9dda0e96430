"""Script normalization with ordered longest-match rewrite rules.

Rules are read from TSV (``from<TAB>to``, ``#`` comments, empty ``to``
deletes). Text and rules are NFC-normalized before matching, and the
output of a rule is never re-scanned, so ``c -> cc`` terminates.
"""

from __future__ import annotations

import io
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, TextIO

from .errors import DuplicateRuleError, ParseError


def nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


@dataclass(frozen=True)
class RewriteRule:
    source: str
    target: str

    def __post_init__(self) -> None:
        if not self.source:
            raise ValueError("rewrite rule with empty left-hand side")


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[RewriteRule, ...] = ()
    name: str = ""
    _table: dict[str, str] = field(init=False, repr=False, compare=False, hash=False)
    _lengths: tuple[int, ...] = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        table: dict[str, str] = {}
        for rule in self.rules:
            key = nfc(rule.source)
            if key in table:
                raise DuplicateRuleError(f"duplicate rule for {rule.source!r}")
            table[key] = nfc(rule.target)
        object.__setattr__(self, "_table", table)
        object.__setattr__(self, "_lengths", tuple(sorted({len(k) for k in table}, reverse=True)))

    def __len__(self) -> int:
        return len(self.rules)

    def inverted(self) -> "RuleSet":
        """Rules mapping the other way. Deletion rules cannot be inverted and are dropped."""
        return RuleSet(
            tuple(RewriteRule(r.target, r.source) for r in self.rules if r.target),
            name=f"{self.name}^-1" if self.name else "",
        )


def load_rules(source: TextIO | str | Iterable[str], name: str = "") -> RuleSet:
    if isinstance(source, str):
        source = io.StringIO(source)
    rules = []
    for lineno, line in enumerate(source, start=1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(f"expected 'from<TAB>to', got {len(parts)} field(s)", lineno, name or None)
        if not parts[0]:
            raise ParseError("empty left-hand side", lineno, name or None)
        rules.append(RewriteRule(parts[0], parts[1]))
    return RuleSet(tuple(rules), name=name)


def normalize(text: str, rules: RuleSet) -> str:
    text = nfc(text)
    if not rules.rules:
        return text
    table, lengths = rules._table, rules._lengths
    out = []
    i, n = 0, len(text)
    while i < n:
        for length in lengths:
            if i + length <= n:
                replacement = table.get(text[i : i + length])
                if replacement is not None:
                    out.append(replacement)
                    i += length
                    break
        else:
            out.append(text[i])
            i += 1
    return "".join(out)
