"""Ablation sweeps: dictionary masking, cross-reference removal, morphology on/off, grammar chapters.

Every sweep reports gloss coverage, which needs no model. Passing a backend
and references adds a BLEU column from full translations.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Any, Sequence

from .evaluation import Tokenizer, mask_lexicon, spbleu, strip_links
from .gloss import GlossLine, gloss_coverage, gloss_sentence
from .grammar import estimate_tokens
from .lexicon import Lexicon
from .llm import Backend
from .pipeline import PipelineConfig, Resources, translate_many


def derive(res: Resources, cfg: PipelineConfig | None = None, **loaded: Any) -> Resources:
    """A copy of ``res`` with some resources swapped out; the grammar summary cache is shared."""
    new = Resources(cfg or res.cfg, res.cache)
    with res._lock:
        base = dict(res._loaded)
    base.update(loaded)
    return new.preset(**base)


def _glosses(sentences: Sequence[str], res: Resources, lex: Lexicon, use_transducer: bool = True) -> list[GlossLine]:
    transducer = res.transducer if use_transducer else None
    return [gloss_sentence(s, transducer, lex, res.input_rules, res.cfg.gloss) for s in sentences]


def _mean_related(glosses: Sequence[GlossLine]) -> float:
    lookups = [lk for g in glosses for w in g.words for lk in w.lookups]
    if not lookups:
        return 0.0
    return sum(len(lk.related) for lk in lookups) / len(lookups)


def _bleu(
    sentences: Sequence[str],
    references: Sequence[str] | None,
    res: Resources,
    backend: Backend | None,
    tok: Tokenizer,
) -> float | None:
    if backend is None or references is None:
        return None
    results = translate_many(sentences, res.cfg, backend, res)
    return spbleu([r.translation for r in results], list(references), tok).score


def mask_sweep(
    sentences: Sequence[str],
    res: Resources,
    ps: Sequence[float],
    seed: int,
    backend: Backend | None = None,
    references: Sequence[str] | None = None,
    strip: bool = False,
    tok: Tokenizer | None = None,
) -> list[dict]:
    """One row per masking probability: entries kept, coverage, mean related entries, BLEU."""
    tok = tok or Tokenizer(res.cfg.tokenizer)
    full = strip_links(res.lexicon) if strip else res.lexicon
    rows = []
    for p in ps:
        lex = mask_lexicon(full, p, seed)
        glosses = _glosses(sentences, res, lex)
        rows.append(
            {
                "p": p,
                "links": "stripped" if strip else "kept",
                "entries": len(lex),
                "coverage": gloss_coverage(glosses),
                "mean_related": _mean_related(glosses),
                "bleu": _bleu(sentences, references, derive(res, lexicon=lex), backend, tok),
            }
        )
    return rows


def links_sweep(
    sentences: Sequence[str],
    res: Resources,
    ps: Sequence[float],
    seed: int,
    backend: Backend | None = None,
    references: Sequence[str] | None = None,
    tok: Tokenizer | None = None,
) -> list[dict]:
    """The masking sweep with cross-references kept and with them stripped."""
    return mask_sweep(sentences, res, ps, seed, backend, references, False, tok) + mask_sweep(
        sentences, res, ps, seed, backend, references, True, tok
    )


def morphology_ablation(
    sentences: Sequence[str],
    res: Resources,
    backend: Backend | None = None,
    references: Sequence[str] | None = None,
    tok: Tokenizer | None = None,
) -> list[dict]:
    """Morphology off is the same run with the transducer unset."""
    tok = tok or Tokenizer(res.cfg.tokenizer)
    rows = []
    for on in (True, False):
        glosses = _glosses(sentences, res, res.lexicon, use_transducer=on)
        variant = res if on else derive(res, replace(res.cfg, transducer_path=None), transducer=None)
        rows.append(
            {
                "morphology": "on" if on else "off",
                "coverage": gloss_coverage(glosses),
                "analyzed_words": sum(bool(w.analyses) for g in glosses for w in g.words),
                "bleu": _bleu(sentences, references, variant, backend, tok),
            }
        )
    return rows


def chapter_ablation(
    sentences: Sequence[str],
    res: Resources,
    chapter_sets: Sequence[Sequence[str] | None],
    backend: Backend | None = None,
    references: Sequence[str] | None = None,
    tok: Tokenizer | None = None,
) -> list[dict]:
    """One row per grammar chapter selection (``None`` = whole book)."""
    tok = tok or Tokenizer(res.cfg.tokenizer)
    doc = res.grammar_doc
    rows = []
    for chapters in chapter_sets:
        text = doc.restrict(list(chapters) if chapters is not None else None)
        cfg = replace(res.cfg, chapters=tuple(chapters) if chapters is not None else None)
        with res._lock:
            keep = {k: v for k, v in res._loaded.items() if k != "grammar"}
        variant = Resources(cfg, res.cache).preset(**keep)
        rows.append(
            {
                "chapters": "+".join(chapters) if chapters is not None else "*",
                "grammar_tokens": estimate_tokens(text, cfg.budget),
                "bleu": _bleu(sentences, references, variant, backend, tok),
            }
        )
    return rows
