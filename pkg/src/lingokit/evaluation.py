"""Scoring: spBLEU-style corpus BLEU, response-selection accuracy, exact match.

Also the dictionary ablation operators (entry masking, link stripping).
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import random
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Mapping, Sequence, TextIO

from .errors import AnswerParseError, ConfigError, EmptyCorpusError, LengthMismatchError
from .lexicon import Entry, Lexicon

MAX_ORDER = 4
TOKENIZER_MODES = ("whitespace", "character", "external-subword")


class Tokenizer:
    """Whitespace, character, or SentencePiece tokenization (the last needs a model file)."""

    def __init__(self, mode: str = "whitespace", model_path: str | None = None):
        if mode not in TOKENIZER_MODES:
            raise ConfigError(f"unknown tokenizer mode {mode!r}")
        if mode == "external-subword" and not model_path:
            raise ConfigError("external-subword tokenizer needs a model path")
        self.mode = mode
        self.model_path = model_path
        self._sp = None

    def _processor(self):
        if self._sp is None:
            try:
                import sentencepiece
            except ImportError as exc:
                raise ConfigError("external-subword tokenization requires the sentencepiece package") from exc
            self._sp = sentencepiece.SentencePieceProcessor(model_file=self.model_path)
        return self._sp

    def tokenize(self, text: str) -> list[str]:
        if not text:
            return []
        if self.mode == "whitespace":
            return text.split()
        if self.mode == "character":
            return [c for c in text if not c.isspace()]
        return list(self._processor().encode(text, out_type=str))

    @property
    def label(self) -> str:
        return self.mode if self.mode != "external-subword" else f"spm:{self.model_path}"


@dataclass(frozen=True)
class BleuReport:
    score: float
    precisions: tuple[float, ...]
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    tokenizer: str = "whitespace"
    matches: tuple[int, ...] = ()
    totals: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["precisions"] = list(self.precisions)
        d["matches"] = list(self.matches)
        d["totals"] = list(self.totals)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def smoothed_precision(n: int, matches: int, total: int) -> float:
    # Unigrams are never smoothed: no shared token means BLEU 0.
    # For n >= 2 a zero match count gets add-one smoothing, (m + 1) / (t + 1),
    # which also gives 1.0 when the corpus has no n-grams of that order.
    # (sacrebleu's "exp" method would instead use 1 / (2^k * t) for the k-th zero.)
    if n == 1:
        return matches / total if total else 0.0
    if matches == 0:
        return 1.0 / (total + 1)
    return matches / total


def spbleu(
    hypotheses: Sequence[str], references: Sequence[str], tok: Tokenizer | None = None
) -> BleuReport:
    """Corpus BLEU-4 with one reference per hypothesis, on ``tok`` tokens."""
    tok = tok or Tokenizer()
    if len(hypotheses) != len(references):
        raise LengthMismatchError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise EmptyCorpusError("no sentences to score")
    matches = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h, r = tok.tokenize(hyp), tok.tokenize(ref)
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, MAX_ORDER + 1):
            hc, rc = ngrams(h, n), ngrams(r, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(len(h) - n + 1, 0)
    precisions = tuple(smoothed_precision(n, matches[n - 1], totals[n - 1]) for n in range(1, MAX_ORDER + 1))
    if hyp_len == 0:
        # no output at all: the penalty's limit is 0
        bp = 0.0
    elif hyp_len < ref_len:
        bp = math.exp(1 - ref_len / hyp_len)
    else:
        bp = 1.0
    if bp == 0.0 or min(precisions) == 0.0:
        score = 0.0
    else:
        score = 100 * bp * math.exp(sum(math.log(p) for p in precisions) / MAX_ORDER)
    return BleuReport(score, precisions, bp, hyp_len, ref_len, tok.label, tuple(matches), tuple(totals))


AnswerFn = Callable[[str, Sequence[str]], "int | None"]


def choice_orders(seed: int, n_items: int, rounds: int | None, n_choices: int = 4) -> list[list[tuple[int, ...]]]:
    """Per item, the choice orders to present. ``rounds=None`` enumerates every permutation."""
    if rounds is None:
        every = list(itertools.permutations(range(n_choices)))
        return [every for _ in range(n_items)]
    rng = random.Random(seed)
    orders = []
    for _ in range(n_items):
        item_orders = []
        for _ in range(rounds):
            perm = list(range(n_choices))
            rng.shuffle(perm)
            item_orders.append(tuple(perm))
        orders.append(item_orders)
    return orders


def response_selection_accuracy(
    items: Sequence,
    answer_fn: AnswerFn,
    seed: int = 0,
    rounds: int | None = 4,
) -> float:
    """Mean correctness over items and shuffled presentations of their choices.

    ``items`` carry ``context``, ``choices`` and ``gold_index``. ``answer_fn``
    gets the context and the shown choices and returns a shown position, or
    None / raises :class:`AnswerParseError` when it cannot answer (incorrect).
    """
    if not items:
        raise EmptyCorpusError("no items to score")
    correct = trials = 0
    for item, orders in zip(items, choice_orders(seed, len(items), rounds, len(item_choices(items[0])))):
        choices = item_choices(item)
        for perm in orders:
            shown = [choices[i] for i in perm]
            try:
                pos = answer_fn(item_context(item), shown)
            except AnswerParseError:
                pos = None
            trials += 1
            if pos is not None and 0 <= pos < len(perm) and perm[pos] == item_gold(item):
                correct += 1
    return correct / trials


def item_context(item) -> str:
    return item["context"] if isinstance(item, Mapping) else item.context


def item_choices(item) -> Sequence[str]:
    return item["choices"] if isinstance(item, Mapping) else item.choices


def item_gold(item) -> int:
    return item["gold_index"] if isinstance(item, Mapping) else item.gold_index


def exact_match(pred: Sequence[float | None], gold: Sequence[float]) -> float:
    if len(pred) != len(gold):
        raise LengthMismatchError(f"{len(pred)} predictions vs {len(gold)} answers")
    if not gold:
        return 0.0
    return sum(p is not None and p == g for p, g in zip(pred, gold)) / len(gold)


def mask_lexicon(lex: Lexicon, p: float, seed: int) -> Lexicon:
    """Drop each headword independently with probability ``p``.

    One uniform draw per headword in sorted order, so for a fixed seed the
    set removed at a smaller ``p`` is contained in the set removed at a larger one.
    """
    if not 0 <= p <= 1:
        raise ValueError("mask probability must be in [0, 1]")
    rng = random.Random(seed)
    kept = {}
    for headword in sorted(lex.entries):
        if rng.random() >= p:
            kept[headword] = lex.entries[headword]
    return lex.replace(kept)


def strip_links(lex: Lexicon) -> Lexicon:
    stripped = {
        h: tuple(Entry(e.headword, e.definitions, e.pos, (), e.notes) for e in es) for h, es in lex.entries.items()
    }
    return lex.replace(stripped)


def write_csv(rows: Iterable[Mapping], out: TextIO, fieldnames: Sequence[str] | None = None) -> None:
    rows = list(rows)
    if fieldnames is None:
        fieldnames = list(rows[0]) if rows else []
    writer = csv.DictWriter(out, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


def csv_text(rows: Iterable[Mapping], fieldnames: Sequence[str] | None = None) -> str:
    buf = io.StringIO()
    write_csv(rows, buf, fieldnames)
    return buf.getvalue()
