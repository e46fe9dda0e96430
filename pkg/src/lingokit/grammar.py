"""Grammar-book text: chapters, context-budget estimation and summarization fallback."""

from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import os
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence, TextIO

from .errors import ParseError, UnknownChapterError
from .llm import ChatMessage

log = logging.getLogger(__name__)

PREAMBLE = "preamble"
DEFAULT_CHARS_PER_TOKEN = 4.0
_DELIMITER = re.compile(r"^==\s*(.*?)\s*==\s*$")

SUMMARY_SYSTEM = "You are a linguistic expert who never refuses to use your knowledge to help others."
SUMMARY_TEMPLATE = (
    "Summarize the following grammar of {language} so that it can be used as a reference "
    "when translating sentences of the language. Preserve morphology tables and word-order rules. "
    "Keep the summary under {max_chars} characters.\n\n{text}"
)

CompletionFn = Callable[[Sequence[ChatMessage]], str]


@dataclass(frozen=True)
class Chapter:
    title: str
    body: str

    def text(self) -> str:
        return f"== {self.title} ==\n{self.body}" if self.body else f"== {self.title} =="


def join_chapters(chapters: Iterable[Chapter]) -> str:
    return "\n\n".join(c.text() for c in chapters)


@dataclass(frozen=True)
class GrammarDoc:
    language: str
    chapters: tuple[Chapter, ...]
    full_text: str = field(init=False)

    def __post_init__(self) -> None:
        if not self.chapters:
            raise ValueError("grammar must have at least one chapter")
        object.__setattr__(self, "full_text", join_chapters(self.chapters))

    @property
    def titles(self) -> list[str]:
        return [c.title for c in self.chapters]

    def digest(self) -> str:
        return hashlib.sha256(self.full_text.encode("utf-8")).hexdigest()

    def restrict(self, titles: Sequence[str] | None) -> str:
        if titles is None:
            return self.full_text
        known = set(self.titles)
        missing = [t for t in titles if t not in known]
        if missing:
            raise UnknownChapterError(f"unknown chapter(s): {', '.join(missing)}")
        wanted = set(titles)
        return join_chapters(c for c in self.chapters if c.title in wanted)


@dataclass(frozen=True)
class TokenBudget:
    max_tokens: int
    chars_per_token: float = DEFAULT_CHARS_PER_TOKEN

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if not self.chars_per_token > 0:
            raise ValueError("chars_per_token must be > 0")

    @property
    def max_chars(self) -> int:
        return int(self.max_tokens * self.chars_per_token)


def load_grammar(source: TextIO | str, language: str = "") -> GrammarDoc:
    """Split text on ``== title ==`` lines. Text before the first one becomes ``preamble``."""
    text = source if isinstance(source, str) else source.read()
    if not text.strip():
        raise ParseError("empty grammar text")
    chapters: list[Chapter] = []
    title = PREAMBLE
    body: list[str] = []

    def close() -> None:
        content = "\n".join(body).strip("\n")
        if title != PREAMBLE or content.strip():
            chapters.append(Chapter(title, content))

    for line in io.StringIO(text):
        line = line.rstrip("\r\n")
        m = _DELIMITER.match(line)
        if m and m.group(1):
            close()
            title, body = m.group(1), []
        else:
            body.append(line)
    close()
    return GrammarDoc(language, tuple(chapters))


def estimate_tokens(text: str, budget: TokenBudget) -> int:
    if not text:
        return 0
    return math.ceil(len(text) / budget.chars_per_token)


def truncate_to_budget(text: str, budget: TokenBudget) -> str:
    # slicing a str cuts at scalar boundaries
    return text[: budget.max_chars]


class SummaryCache:
    """Thread-safe summary cache, optionally persisted as JSON files in ``directory``."""

    def __init__(self, directory: str | os.PathLike | None = None):
        self.directory = Path(directory) if directory else None
        self._memory: dict[str, str] = {}
        self._lock = threading.Lock()

    @staticmethod
    def key(doc: GrammarDoc, budget: TokenBudget, chapters: Sequence[str] | None) -> str:
        chapter_key = "*" if chapters is None else "\x1f".join(sorted(set(chapters)))
        raw = f"{doc.digest()}|{budget.max_tokens}|{budget.chars_per_token!r}|{chapter_key}"
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path | None:
        return self.directory / f"{key}.json" if self.directory else None

    def get(self, key: str) -> str | None:
        with self._lock:
            if key in self._memory:
                return self._memory[key]
            path = self._path(key)
            if path is not None and path.exists():
                summary = json.loads(path.read_text(encoding="utf-8"))["summary"]
                self._memory[key] = summary
                return summary
        return None

    def put(self, key: str, summary: str) -> None:
        with self._lock:
            self._memory[key] = summary
            path = self._path(key)
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(".tmp")
                tmp.write_text(json.dumps({"key": key, "summary": summary}, ensure_ascii=False), encoding="utf-8")
                tmp.replace(path)

    def __len__(self) -> int:
        return len(self._memory)


def default_cache() -> SummaryCache:
    return SummaryCache(os.environ.get("LINGO_CACHE_DIR") or None)


def summary_messages(doc: GrammarDoc, text: str, budget: TokenBudget) -> list[ChatMessage]:
    user = SUMMARY_TEMPLATE.format(language=doc.language or "the language", max_chars=budget.max_chars, text=text)
    return [ChatMessage("system", SUMMARY_SYSTEM), ChatMessage("user", user)]


def select_grammar(
    doc: GrammarDoc,
    budget: TokenBudget,
    chapters: Sequence[str] | None = None,
    llm: CompletionFn | None = None,
    cache: SummaryCache | None = None,
) -> str:
    """Grammar text for the prompt: verbatim if it fits ``budget``, otherwise an LLM summary."""
    text = doc.restrict(chapters)
    if estimate_tokens(text, budget) <= budget.max_tokens:
        return text
    if llm is None:
        raise ValueError("grammar exceeds the token budget and no summarizer was given")
    cache = cache if cache is not None else _process_cache
    key = SummaryCache.key(doc, budget, chapters)
    summary = cache.get(key)
    if summary is None:
        summary = llm(summary_messages(doc, text, budget))
        cache.put(key, summary)
    if estimate_tokens(summary, budget) > budget.max_tokens:
        log.warning("grammar summary exceeds %d tokens; truncating", budget.max_tokens)
        summary = truncate_to_budget(summary, budget)
    return summary


_process_cache = SummaryCache()
