"""Parallel-corpus loading and construction of the derived benchmarks.

Everything built here is a pure function of (input data, seed).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import AlignmentError, InsufficientDataError, ParseError

log = logging.getLogger(__name__)

RESHUFFLE_LIMIT = 8
N_CHOICES = 4


@dataclass(frozen=True)
class ParallelCorpus:
    pairs: tuple[tuple[str, str], ...]
    source_language: str = ""
    target_language: str = ""
    path: str = ""

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def sources(self) -> list[str]:
        return [s for s, _ in self.pairs]

    @property
    def targets(self) -> list[str]:
        return [t for _, t in self.pairs]


def _read_lines(path: str | os.PathLike) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\r\n") for line in f]


def load_parallel(
    path: str | os.PathLike,
    target_path: str | os.PathLike | None = None,
    source_language: str = "",
    target_language: str = "",
) -> ParallelCorpus:
    """TSV ``source<TAB>target`` per line, or two line-aligned files. Blank TSV lines are skipped."""
    pairs = []
    if target_path is None:
        for lineno, line in enumerate(_read_lines(path), start=1):
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ParseError(f"expected 2 tab-separated fields, got {len(fields)}", lineno, str(path))
            src, tgt = fields[0].strip(), fields[1].strip()
            if not src or not tgt:
                raise ParseError("empty side in parallel pair", lineno, str(path))
            pairs.append((src, tgt))
    else:
        sources, targets = _read_lines(path), _read_lines(target_path)
        if len(sources) != len(targets):
            raise AlignmentError(f"{path} has {len(sources)} lines but {target_path} has {len(targets)}")
        for lineno, (src, tgt) in enumerate(zip(sources, targets), start=1):
            if not src.strip() or not tgt.strip():
                raise ParseError("empty side in parallel pair", lineno, str(path))
            pairs.append((src.strip(), tgt.strip()))
    return ParallelCorpus(tuple(pairs), source_language, target_language, str(path))


@dataclass(frozen=True)
class ResponseSelectionItem:
    context: str
    choices: tuple[str, ...]
    gold_index: int

    def __post_init__(self) -> None:
        if len(self.choices) != N_CHOICES:
            raise ValueError(f"expected {N_CHOICES} choices")
        if not 0 <= self.gold_index < N_CHOICES:
            raise ValueError("gold_index out of range")

    @property
    def gold(self) -> str:
        return self.choices[self.gold_index]


@dataclass(frozen=True)
class ReorderItem:
    shuffled: str
    original: str


@dataclass(frozen=True)
class KeywordItem:
    keywords: tuple[str, ...]
    original: str


@dataclass(frozen=True)
class MathItem:
    question: str
    answer: float


def load_dialogs(path: str | os.PathLike) -> list[list[str]]:
    """Dialogs separated by blank lines, one utterance per line."""
    dialogs: list[list[str]] = [[]]
    for line in _read_lines(path):
        if line.strip():
            dialogs[-1].append(line.strip())
        elif dialogs[-1]:
            dialogs.append([])
    return [d for d in dialogs if d]


def build_response_selection(dialogs: Sequence[Sequence[str]], seed: int) -> list[ResponseSelectionItem]:
    """One item per (context, next utterance) pair; distractors come from other dialogs."""
    rng = random.Random(seed)
    items = []
    for d_index, dialog in enumerate(dialogs):
        pool_all = []
        for other_index, other in enumerate(dialogs):
            if other_index != d_index:
                pool_all.extend(other)
        for i in range(len(dialog) - 1):
            context, gold = "\n".join(dialog[: i + 1]), dialog[i + 1]
            pool = list(dict.fromkeys(u for u in pool_all if u != gold))
            if len(pool) < N_CHOICES - 1:
                raise InsufficientDataError(
                    f"dialog {d_index}: only {len(pool)} distinct responses available from other dialogs"
                )
            choices = rng.sample(pool, N_CHOICES - 1)
            gold_index = rng.randrange(N_CHOICES)
            choices.insert(gold_index, gold)
            items.append(ResponseSelectionItem(context, tuple(choices), gold_index))
    if not items:
        raise InsufficientDataError("no context-response pairs in the dialogs")
    return items


def shuffle_tokens(tokens: Sequence[str], rng: random.Random) -> list[str]:
    shuffled = list(tokens)
    rng.shuffle(shuffled)
    if len(set(tokens)) < 2:
        return shuffled
    for _ in range(RESHUFFLE_LIMIT):
        if shuffled != list(tokens):
            return shuffled
        rng.shuffle(shuffled)
    if shuffled == list(tokens):
        # rotating a sequence whose tokens are not all equal always changes it
        shuffled = shuffled[1:] + shuffled[:1]
    return shuffled


def build_reorder(corpus: ParallelCorpus | Iterable[str], seed: int) -> list[ReorderItem]:
    sentences = corpus.sources if isinstance(corpus, ParallelCorpus) else list(corpus)
    rng = random.Random(seed)
    items = []
    for sentence in sentences:
        tokens = sentence.split()
        if len(tokens) < 2:
            log.warning("skipping %r: fewer than 2 tokens", sentence)
            continue
        items.append(ReorderItem(" ".join(shuffle_tokens(tokens, rng)), " ".join(tokens)))
    return items


def _jsonl(path: str | os.PathLike) -> Iterable[tuple[int, dict]]:
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", lineno, str(path)) from None
        if not isinstance(obj, dict):
            raise ParseError("expected a JSON object", lineno, str(path))
        yield lineno, obj


def _is_number(value: object) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def load_keyword_items(path: str | os.PathLike) -> list[KeywordItem]:
    """JSONL with ``keywords`` (non-empty list, kept in authored order) and ``original``."""
    items = []
    for lineno, obj in _jsonl(path):
        keywords, original = obj.get("keywords"), obj.get("original")
        if not isinstance(keywords, list) or not keywords or not all(isinstance(k, str) and k for k in keywords):
            raise ParseError("'keywords' must be a non-empty list of strings", lineno, str(path))
        if not isinstance(original, str) or not original.strip():
            raise ParseError("missing 'original'", lineno, str(path))
        items.append(KeywordItem(tuple(keywords), original))
    return items


def load_math_items(path: str | os.PathLike) -> list[MathItem]:
    """JSONL with ``question`` (string) and ``answer`` (number)."""
    items = []
    for lineno, obj in _jsonl(path):
        question, answer = obj.get("question"), obj.get("answer")
        if not isinstance(question, str) or not question.strip():
            raise ParseError("missing 'question'", lineno, str(path))
        if not _is_number(answer):
            raise ParseError("'answer' must be a number", lineno, str(path))
        items.append(MathItem(question, answer))
    return items


def load_response_selection_items(path: str | os.PathLike) -> list[ResponseSelectionItem]:
    items = []
    for lineno, obj in _jsonl(path):
        try:
            items.append(ResponseSelectionItem(obj["context"], tuple(obj["choices"]), obj["gold_index"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad response-selection item: {exc}", lineno, str(path)) from None
    return items


def load_reorder_items(path: str | os.PathLike) -> list[ReorderItem]:
    items = []
    for lineno, obj in _jsonl(path):
        shuffled, original = obj.get("shuffled"), obj.get("original")
        if not isinstance(shuffled, str) or not isinstance(original, str):
            raise ParseError("'shuffled' and 'original' must be strings", lineno, str(path))
        if sorted(shuffled.split()) != sorted(original.split()):
            raise ParseError("'shuffled' is not a permutation of 'original'", lineno, str(path))
        items.append(ReorderItem(shuffled, original))
    return items


def item_to_dict(item) -> dict:
    d = asdict(item)
    for key, value in d.items():
        if isinstance(value, tuple):
            d[key] = list(value)
    return d


def write_items(items: Iterable, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for item in items:
            f.write(json.dumps(item_to_dict(item), ensure_ascii=False, sort_keys=True) + "\n")


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(
    path: str | os.PathLike, artifacts: Sequence[str | os.PathLike], seed: int, inputs: Sequence[str | os.PathLike] = ()
) -> dict:
    """Record checksums of raw inputs and derived artifacts plus the seed used to build them."""
    manifest: Mapping = {
        "seed": seed,
        "inputs": {Path(p).name: sha256_file(p) for p in inputs},
        "artifacts": {Path(p).name: sha256_file(p) for p in artifacts},
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return dict(manifest)
