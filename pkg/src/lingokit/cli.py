"""Command-line entry point.

Exit codes: 0 success, 1 data/validation/config errors, 2 backend errors.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path
from typing import Iterator, Sequence, TextIO

from . import __version__
from .ablation import chapter_ablation, links_sweep, mask_sweep, morphology_ablation
from .bench import (
    ResponseSelectionItem,
    build_reorder,
    build_response_selection,
    item_to_dict,
    load_dialogs,
    load_keyword_items,
    load_math_items,
    load_parallel,
    load_reorder_items,
    load_response_selection_items,
    write_items,
    write_manifest,
)
from .errors import BackendError, ConfigError, LingoError
from .evaluation import Tokenizer, csv_text, exact_match, response_selection_accuracy, spbleu
from .fst import MorphologyConfig, apply_up, load_transducer, rank_analyses
from .gloss import gloss_sentence, render_gloss
from .lexicon import collect_related, load_lexicon, resolve
from .orthography import load_rules, normalize
from .pipeline import (
    PipelineConfig,
    Resources,
    load_config,
    make_backend,
    run_downstream,
    run_downstream_many,
    translate_many,
    write_jsonl,
)

log = logging.getLogger("lingokit")

NEEDS_CONFIG = {"translate", "ablate"}


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="pipeline config file (key = value)")
    parser.add_argument("--seed", type=int, help="random seed (overrides the config)")
    parser.add_argument("--out", type=Path, help="output file (default: stdout)")
    parser.add_argument("--backend", choices=("http", "mock"), help="completion backend (overrides the config)")
    parser.add_argument("--jobs", type=int, help="worker threads (overrides the config)")
    parser.add_argument("--in", dest="input", type=Path, help="input file (default: positional args or stdin)")
    parser.add_argument("--verbose", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lingokit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="run the morphological analyzer on words")
    _common(p)
    p.add_argument("--fst", type=Path, help="AT&T transducer file (default: transducer_path from --config)")
    p.add_argument("words", nargs="*")

    p = sub.add_parser("normalize", help="rewrite text into the dictionary script")
    _common(p)
    p.add_argument("--rules", type=Path, help="rewrite rules TSV (default: rules_path from --config)")
    p.add_argument("text", nargs="*")

    p = sub.add_parser("lookup", help="resolve words against the dictionary")
    _common(p)
    p.add_argument("--lexicon", type=Path, help="JSONL dictionary (default: lexicon_path from --config)")
    p.add_argument("--k", type=int, help="fuzzy candidates")
    p.add_argument("--suffix", action="append", help="strippable suffix (repeatable)")
    p.add_argument("words", nargs="*")

    p = sub.add_parser("gloss", help="gloss sentences (one per line)")
    _common(p)
    p.add_argument("--render", action="store_true", help="write the plain-text gloss instead of JSONL")
    p.add_argument("sentences", nargs="*")

    p = sub.add_parser("translate", help="translate sentences through the full pipeline")
    _common(p)
    p.add_argument("--timings", action="store_true", help="include per-stage timings in the output")
    p.add_argument("sentences", nargs="*")

    p = sub.add_parser("bench", help="build benchmarks or run a downstream task")
    _common(p)
    p.add_argument("action", choices=("build-selection", "build-reorder", "run"))
    p.add_argument("--task", choices=("translation", "response_selection", "math", "reorder", "keyword_to_text"))
    p.add_argument("--rounds", type=int, default=4, help="choice shuffles per item; 0 enumerates all 24")
    p.add_argument("--report", type=Path, help="write the score report (JSON) here")
    p.add_argument("--manifest", type=Path, help="write a checksum manifest for built benchmarks")

    p = sub.add_parser("ablate", help="ablation sweeps (CSV)")
    _common(p)
    p.add_argument("kind", choices=("mask", "links", "morph", "chapters"))
    p.add_argument("--p", default="0,0.25,0.5,0.75,1.0", help="comma-separated mask probabilities")
    p.add_argument(
        "--chapters",
        default="*",
        help="chapter selections separated by '|', chapters within one by ','; '*' is the whole book",
    )
    p.add_argument("--bleu", action="store_true", help="also translate and score (input must be parallel TSV)")

    p = sub.add_parser("report", help="score hypotheses against references")
    _common(p)
    p.add_argument("--hyp", type=Path, required=True, help="hypotheses: text lines or translate JSONL output")
    p.add_argument("--ref", type=Path, required=True, help="references, one per line (or TSV: target column)")
    p.add_argument("--tokenizer", choices=("whitespace", "character", "external-subword"), default=None)
    p.add_argument("--spm-model", type=Path)
    return parser


def _lines(args: argparse.Namespace, positional: Sequence[str]) -> list[str]:
    if positional:
        return list(positional)
    if args.input is not None:
        with open(args.input, encoding="utf-8") as f:
            return [line.rstrip("\r\n") for line in f if line.strip()]
    return [line.rstrip("\r\n") for line in sys.stdin if line.strip()]


@contextlib.contextmanager
def _output(path: Path | None) -> Iterator[TextIO]:
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            yield f


def _config(args: argparse.Namespace) -> PipelineConfig:
    overrides = {"seed": args.seed, "backend": args.backend, "jobs": args.jobs}
    if args.config is None:
        if args.command in NEEDS_CONFIG or (args.command == "bench" and args.action == "run"):
            raise ConfigError(f"--config is required for {args.command}")
        return PipelineConfig(**{k: v for k, v in overrides.items() if v is not None})
    return load_config(args.config, overrides)


def _source_and_refs(lines: Sequence[str]) -> tuple[list[str], list[str] | None]:
    if lines and all("\t" in line for line in lines):
        pairs = [line.split("\t", 1) for line in lines]
        return [s for s, _ in pairs], [t for _, t in pairs]
    return list(lines), None


def cmd_analyze(args, cfg: PipelineConfig) -> None:
    path = args.fst or cfg.transducer_path
    if path is None:
        raise ConfigError("no transducer: pass --fst or set transducer_path")
    with open(path, encoding="utf-8") as f:
        t = load_transducer(f, name=str(path))
    morph: MorphologyConfig = cfg.morphology
    with _output(args.out) as out:
        for word in _lines(args, args.words):
            analyses = rank_analyses(apply_up(t, word, morph, cfg.epsilon_cap))[: cfg.max_analyses]
            out.write(json.dumps({"word": word, "analyses": [a.raw for a in analyses]}, ensure_ascii=False) + "\n")


def cmd_normalize(args, cfg: PipelineConfig) -> None:
    path = args.rules or cfg.rules_path
    if path is None:
        raise ConfigError("no rules: pass --rules or set rules_path")
    with open(path, encoding="utf-8") as f:
        rules = load_rules(f, name=str(path))
    with _output(args.out) as out:
        for line in _lines(args, [" ".join(args.text)] if args.text else []):
            out.write(normalize(line, rules) + "\n")


def cmd_lookup(args, cfg: PipelineConfig) -> None:
    path = args.lexicon or cfg.lexicon_path
    if path is None:
        raise ConfigError("no lexicon: pass --lexicon or set lexicon_path")
    with open(path, encoding="utf-8") as f:
        lex = load_lexicon(f, cfg.source_language, name=str(path))
    suffixes = tuple(args.suffix) if args.suffix else cfg.suffixes
    k = args.k or cfg.k
    with _output(args.out) as out:
        for word in _lines(args, args.words):
            matches = resolve(lex, word, suffixes=suffixes, k=k)
            related = []
            for m in matches:
                for e in collect_related(lex, m, cfg.traversal):
                    if e not in related:
                        related.append(e)
            record = {
                "query": word,
                "matches": [m.to_dict() for m in matches],
                "related": [e.to_dict() for e in related[: cfg.max_related]],
            }
            out.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def cmd_gloss(args, cfg: PipelineConfig) -> None:
    res = Resources(cfg)
    with _output(args.out) as out:
        for sentence in _lines(args, args.sentences):
            g = gloss_sentence(sentence, res.transducer, res.lexicon, res.input_rules, cfg.gloss)
            out.write(render_gloss(g) + "\n\n" if args.render else g.to_json() + "\n")


def cmd_translate(args, cfg: PipelineConfig) -> None:
    cfg.check_resources()
    sentences, _ = _source_and_refs(_lines(args, args.sentences))
    backend = make_backend(cfg)
    results = translate_many(sentences, cfg, backend, Resources(cfg))
    with _output(args.out) as out:
        for r in results:
            out.write(r.to_json(include_timings=args.timings) + "\n")


def _load_task_items(task: str, path: Path):
    if task == "response_selection":
        return load_response_selection_items(path)
    if task == "math":
        return load_math_items(path)
    if task == "reorder":
        return load_reorder_items(path)
    if task == "keyword_to_text":
        return load_keyword_items(path)
    return load_parallel(path)


def cmd_bench(args, cfg: PipelineConfig) -> None:
    if args.input is None:
        raise ConfigError("bench needs --in")
    if args.action == "build-selection":
        items = build_response_selection(load_dialogs(args.input), cfg.seed)
    elif args.action == "build-reorder":
        items = build_reorder(load_parallel(args.input), cfg.seed)
    else:
        _bench_run(args, cfg)
        return
    if args.out is None:
        write_jsonl([item_to_dict(i) for i in items], sys.stdout)
        return
    write_items(items, args.out)
    if args.manifest:
        write_manifest(args.manifest, [args.out], cfg.seed, [args.input])


def _bench_run(args, cfg: PipelineConfig) -> None:
    if args.task is None:
        raise ConfigError("bench run needs --task")
    cfg.check_resources()
    backend = make_backend(cfg)
    res = Resources(cfg)
    items = _load_task_items(args.task, args.input)
    tok = Tokenizer(cfg.tokenizer, str(cfg.tokenizer_model) if cfg.tokenizer_model else None)
    report: dict = {"task": args.task, "items": len(items), "tokenizer": tok.label, "prompt_kind": cfg.prompt_kind.value}
    if args.task == "response_selection":

        def answer(context: str, shown: Sequence[str]):
            return run_downstream(args.task, ResponseSelectionItem(context, tuple(shown), 0), cfg, backend, res).answer

        rounds = None if args.rounds == 0 else args.rounds
        report["accuracy"] = response_selection_accuracy(items, answer, cfg.seed, rounds)
        outputs = []
    elif args.task == "translation":
        outputs = run_downstream_many(args.task, items.sources, cfg, backend, res)
        report["bleu"] = spbleu([o.text for o in outputs], items.targets, tok).to_dict()
    else:
        outputs = run_downstream_many(args.task, items, cfg, backend, res)
        if args.task == "math":
            report["exact_match"] = exact_match([o.answer for o in outputs], [i.answer for i in items])
        else:
            report["bleu"] = spbleu([o.text for o in outputs], [i.original for i in items], tok).to_dict()
        report["parse_errors"] = sum(o.error is not None for o in outputs)
    with _output(args.out) as out:
        write_jsonl(outputs, out)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.report:
        args.report.write_text(text + "\n", encoding="utf-8")
    else:
        print(text, file=sys.stderr)


def _parse_ps(text: str) -> list[float]:
    try:
        ps = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"bad --p list {text!r}") from None
    if not ps or not all(0 <= p <= 1 for p in ps):
        raise ConfigError("--p values must lie in [0, 1]")
    return ps


def _parse_chapter_sets(text: str) -> list[list[str] | None]:
    sets: list[list[str] | None] = []
    for part in text.split("|"):
        part = part.strip()
        sets.append(None if part == "*" else [c.strip() for c in part.split(",") if c.strip()])
    return sets


def cmd_ablate(args, cfg: PipelineConfig) -> None:
    sentences, refs = _source_and_refs(_lines(args, []))
    res = Resources(cfg)
    backend = make_backend(cfg) if args.bleu else None
    if args.bleu and refs is None:
        raise ConfigError("--bleu needs parallel TSV input (source<TAB>reference)")
    tok = Tokenizer(cfg.tokenizer, str(cfg.tokenizer_model) if cfg.tokenizer_model else None)
    if args.kind == "mask":
        rows = mask_sweep(sentences, res, _parse_ps(args.p), cfg.seed, backend, refs, tok=tok)
    elif args.kind == "links":
        rows = links_sweep(sentences, res, _parse_ps(args.p), cfg.seed, backend, refs, tok)
    elif args.kind == "morph":
        rows = morphology_ablation(sentences, res, backend, refs, tok)
    else:
        rows = chapter_ablation(sentences, res, _parse_chapter_sets(args.chapters), backend, refs, tok)
    with _output(args.out) as out:
        out.write(csv_text(rows))


def _read_hypotheses(path: Path) -> list[str]:
    lines = [line.rstrip("\r\n") for line in open(path, encoding="utf-8")]
    lines = [line for line in lines if line.strip()]
    if lines and lines[0].lstrip().startswith("{"):
        try:
            return [json.loads(line)["translation"] for line in lines]
        except (json.JSONDecodeError, KeyError):
            pass
    return lines


def cmd_report(args, cfg: PipelineConfig) -> None:
    hyps = _read_hypotheses(args.hyp)
    refs = [line.rstrip("\r\n") for line in open(args.ref, encoding="utf-8") if line.strip()]
    refs = [r.split("\t", 1)[1] if "\t" in r else r for r in refs]
    mode = args.tokenizer or cfg.tokenizer
    model = args.spm_model or cfg.tokenizer_model
    report = spbleu(hyps, refs, Tokenizer(mode, str(model) if model else None))
    with _output(args.out) as out:
        out.write(report.to_json() + "\n")


COMMANDS = {
    "analyze": cmd_analyze,
    "normalize": cmd_normalize,
    "lookup": cmd_lookup,
    "gloss": cmd_gloss,
    "translate": cmd_translate,
    "bench": cmd_bench,
    "ablate": cmd_ablate,
    "report": cmd_report,
}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except BackendError as exc:
        print(f"lingokit: backend error: {exc}", file=sys.stderr)
        return 2
    except (LingoError, OSError, ValueError) as exc:
        print(f"lingokit: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
