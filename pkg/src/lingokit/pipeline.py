"""End-to-end orchestration: normalize, analyze, gloss, prompt, complete, extract.

Configuration is a flat ``key = value`` file; see :data:`CONFIG_KEYS`.
Relative paths in it are resolved against the file's directory.
"""

from __future__ import annotations

import json
import logging
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from .bench import load_parallel
from .errors import AnswerParseError, ConfigError, EmptyInputError, ResourceError
from .fst import MorphologyConfig, Transducer, load_transducer
from .gloss import GlossConfig, GlossLine, gloss_sentence, render_gloss
from .grammar import GrammarDoc, SummaryCache, TokenBudget, load_grammar, select_grammar
from .lexicon import Lexicon, TraversalConfig, load_lexicon, normalize_lexicon
from .llm import (
    Backend,
    ChatMessage,
    CompletionRequest,
    HttpBackend,
    completion_fn,
    load_mock_script,
    make_mock,
)
from .orthography import RuleSet, load_rules
from .prompts import PromptFields, PromptKind, build_prompt, build_task_prompt, extract_delimited

log = logging.getLogger(__name__)

RETRY_REMINDER = "Please enclose your final answer in ###."


@dataclass(frozen=True)
class PipelineConfig:
    source_language: str = ""
    target_language: str = "English"
    prompt_kind: PromptKind = PromptKind.LINGO_FULL
    transducer_path: Path | None = None
    lexicon_path: Path | None = None
    rules_path: Path | None = None
    grammar_path: Path | None = None
    demos_path: Path | None = None
    # "input": rewrite the input into the dictionary's script; "lexicon": rewrite the dictionary
    rules_target: str = "input"
    n_demos: int = 3
    k: int = 3
    suffixes: tuple[str, ...] = ()
    max_related: int = 10
    traversal_enabled: bool = True
    max_analyses: int = 8
    epsilon_cap: int = 32
    morph_joiner: str = " "
    feature_prefix: str = "+"
    feature_tags: tuple[str, ...] = ()
    morph_boundaries: tuple[str, ...] = ("-",)
    max_tokens: int = 8000
    chars_per_token: float = 4.0
    chapters: tuple[str, ...] | None = None
    retry_on_unclean: bool = True
    single_prompt: bool = False
    seed: int = 0
    model: str = ""
    temperature: float = 0.8
    n_samples: int = 1
    jobs: int = 1
    templates_dir: Path | None = None
    cache_dir: Path | None = None
    backend: str = "http"
    mock_script: Path | None = None
    mock_fallback: str = "echo-last-user"
    mock_fixed: str = ""
    tokenizer: str = "whitespace"
    tokenizer_model: Path | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "prompt_kind", PromptKind(self.prompt_kind))
        if self.rules_target not in ("input", "lexicon"):
            raise ConfigError("rules_target must be 'input' or 'lexicon'")
        if self.k < 1 or self.n_demos < 0 or self.jobs < 1 or self.max_related < 1:
            raise ConfigError("k, jobs and max_related must be >= 1; n_demos >= 0")

    @property
    def traversal(self) -> TraversalConfig:
        return TraversalConfig(self.max_related, self.traversal_enabled)

    @property
    def budget(self) -> TokenBudget:
        return TokenBudget(self.max_tokens, self.chars_per_token)

    @property
    def morphology(self) -> MorphologyConfig:
        return MorphologyConfig(
            joiner=self.morph_joiner,
            feature_prefix=self.feature_prefix,
            feature_tags=frozenset(self.feature_tags),
            boundaries=frozenset(self.morph_boundaries),
        )

    @property
    def gloss(self) -> GlossConfig:
        return GlossConfig(
            k=self.k,
            suffixes=self.suffixes,
            traversal=self.traversal,
            morphology=self.morphology,
            max_analyses=self.max_analyses,
            epsilon_cap=self.epsilon_cap,
        )

    def check_resources(self) -> None:
        """Every file the prompt kind needs must exist."""
        needed: list[tuple[str, Path | None]] = []
        kind = self.prompt_kind
        if kind.uses_gloss:
            needed.append(("lexicon_path", self.lexicon_path))
        if kind.uses_grammar:
            needed.append(("grammar_path", self.grammar_path))
        if kind.uses_demos:
            needed.append(("demos_path", self.demos_path))
        for key, path in needed:
            if path is None:
                raise ResourceError(f"{key} is required for prompt kind {kind.value}")
        optional = [self.transducer_path, self.rules_path] if kind.uses_gloss else []
        for path in [p for _, p in needed] + [p for p in optional if p is not None]:
            if not Path(path).exists():
                raise ResourceError(f"resource file not found: {path}")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Path):
                value = str(value)
            elif isinstance(value, PromptKind):
                value = value.value
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out


def _to_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _to_list(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _unquote(text: str) -> str:
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


_PATH_KEYS = {
    "transducer_path", "lexicon_path", "rules_path", "grammar_path", "demos_path",
    "templates_dir", "cache_dir", "mock_script", "tokenizer_model",
}
_INT_KEYS = {"n_demos", "k", "max_related", "max_analyses", "epsilon_cap", "max_tokens", "seed", "n_samples", "jobs"}
_FLOAT_KEYS = {"chars_per_token", "temperature"}
_BOOL_KEYS = {"traversal_enabled", "retry_on_unclean", "single_prompt"}
_LIST_KEYS = {"suffixes", "feature_tags", "morph_boundaries", "chapters"}

CONFIG_KEYS = tuple(f.name for f in fields(PipelineConfig))


def convert_value(key: str, text: str, base: Path | None = None) -> Any:
    if key not in CONFIG_KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    text = _unquote(text.strip())
    try:
        if key in _PATH_KEYS:
            if not text:
                return None
            path = Path(text).expanduser()
            return path if path.is_absolute() or base is None else base / path
        if key in _INT_KEYS:
            return int(text)
        if key in _FLOAT_KEYS:
            return float(text)
        if key in _BOOL_KEYS:
            return _to_bool(text)
        if key in _LIST_KEYS:
            return _to_list(text)
        if key == "prompt_kind":
            return PromptKind(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None
    return text


def parse_config(text: str, base: Path | None = None, overrides: Mapping[str, Any] | None = None) -> PipelineConfig:
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        values[key] = convert_value(key, value, base)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = convert_value(key, value) if isinstance(value, str) else value
    try:
        return PipelineConfig(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path, overrides: Mapping[str, Any] | None = None) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent, overrides)


class Resources:
    """Lazily loaded, shared resources for one config. Safe to use from worker threads."""

    def __init__(self, cfg: PipelineConfig, cache: SummaryCache | None = None):
        self.cfg = cfg
        self.cache = cache if cache is not None else SummaryCache(cfg.cache_dir) if cfg.cache_dir else None
        self._lock = threading.RLock()
        self._loaded: dict[str, Any] = {}

    def _get(self, name: str, loader: Callable[[], Any]) -> Any:
        with self._lock:
            if name not in self._loaded:
                try:
                    self._loaded[name] = loader()
                except OSError as exc:
                    raise ResourceError(f"cannot load {name}: {exc}") from None
            return self._loaded[name]

    @property
    def touched(self) -> set[str]:
        return set(self._loaded)

    def preset(self, **values: Any) -> "Resources":
        """Inject already-built resources (used by ablations)."""
        with self._lock:
            self._loaded.update(values)
        return self

    def _read(self, path: Path | None, loader: Callable, **kwargs) -> Any:
        if path is None:
            return None
        with open(path, encoding="utf-8") as f:
            return loader(f, **kwargs)

    @property
    def rules(self) -> RuleSet:
        return self._get("rules", lambda: self._read(self.cfg.rules_path, load_rules, name=str(self.cfg.rules_path)) or RuleSet())

    @property
    def transducer(self) -> Transducer | None:
        return self._get("transducer", lambda: self._read(self.cfg.transducer_path, load_transducer, name=str(self.cfg.transducer_path)))

    @property
    def lexicon(self) -> Lexicon:
        def load() -> Lexicon:
            if self.cfg.lexicon_path is None:
                raise ResourceError("lexicon_path is not configured")
            lex = self._read(self.cfg.lexicon_path, load_lexicon, language=self.cfg.source_language, name=str(self.cfg.lexicon_path))
            if self.cfg.rules_target == "lexicon":
                lex = normalize_lexicon(lex, self.rules)
            return lex

        return self._get("lexicon", load)

    @property
    def input_rules(self) -> RuleSet:
        return self.rules if self.cfg.rules_target == "input" else RuleSet()

    @property
    def grammar_doc(self) -> GrammarDoc:
        def load() -> GrammarDoc:
            if self.cfg.grammar_path is None:
                raise ResourceError("grammar_path is not configured")
            return self._read(self.cfg.grammar_path, load_grammar, language=self.cfg.source_language)

        return self._get("grammar_doc", load)

    def grammar_text(self, backend: Backend) -> str:
        def load() -> str:
            llm = completion_fn(backend, temperature=self.cfg.temperature, model=self.cfg.model)
            return select_grammar(self.grammar_doc, self.cfg.budget, self.cfg.chapters, llm, self.cache)

        return self._get("grammar", load)

    @property
    def demos(self) -> tuple[tuple[str, str], ...]:
        def load() -> tuple[tuple[str, str], ...]:
            if self.cfg.demos_path is None:
                raise ResourceError("demos_path is not configured")
            corpus = load_parallel(self.cfg.demos_path)
            rng = random.Random(self.cfg.seed)
            n = min(self.cfg.n_demos, len(corpus))
            return tuple(rng.sample(list(corpus.pairs), n))

        return self._get("demos", load)


@dataclass(frozen=True)
class PreparedPrompt:
    sentence: str
    gloss: GlossLine
    messages: tuple[ChatMessage, ...]
    stages: tuple[str, ...]
    timings: Mapping[str, float]


@dataclass(frozen=True)
class TranslationResult:
    source: str
    gloss: GlossLine
    prompt_kind: PromptKind
    raw_output: str
    translation: str
    clean: bool
    attempts: int = 1
    stages: tuple[str, ...] = ()
    timings: Mapping[str, float] = field(default_factory=dict, compare=False)

    def to_dict(self, include_timings: bool = False) -> dict:
        d = {
            "source": self.source,
            "gloss": self.gloss.to_dict(),
            "prompt_kind": self.prompt_kind.value,
            "raw_output": self.raw_output,
            "translation": self.translation,
            "clean": self.clean,
            "attempts": self.attempts,
            "stages": list(self.stages),
        }
        if include_timings:
            d["timings_ms"] = dict(self.timings)
        return d

    def to_json(self, include_timings: bool = False) -> str:
        return json.dumps(self.to_dict(include_timings), ensure_ascii=False, sort_keys=True)


class _Timer:
    def __init__(self) -> None:
        self.stages: list[str] = []
        self.timings: dict[str, float] = {}

    def run(self, stage: str, fn: Callable[[], Any]) -> Any:
        started = time.perf_counter()
        value = fn()
        self.timings[stage] = self.timings.get(stage, 0.0) + (time.perf_counter() - started) * 1000
        if stage not in self.stages:
            self.stages.append(stage)
        return value


def prepare(
    sentence: str,
    cfg: PipelineConfig,
    backend: Backend,
    resources: Resources | None = None,
    extra_instruction: str | None = None,
) -> PreparedPrompt:
    """Run every stage up to (not including) the completion call."""
    if not sentence or not sentence.strip():
        raise EmptyInputError("empty input sentence")
    res = resources or Resources(cfg)
    timer = _Timer()
    kind = cfg.prompt_kind
    gloss = GlossLine(sentence.strip(), ())
    wordbyword = grammar = ""
    demos: tuple[tuple[str, str], ...] = ()
    if kind.uses_gloss:
        gloss = timer.run(
            "gloss",
            lambda: gloss_sentence(sentence, res.transducer, res.lexicon, res.input_rules, cfg.gloss),
        )
        wordbyword = render_gloss(gloss)
    if kind.uses_grammar:
        grammar = timer.run("grammar", lambda: res.grammar_text(backend))
    if kind.uses_demos:
        demos = timer.run("demos", lambda: res.demos)
    fields_ = PromptFields(cfg.source_language, cfg.target_language, gloss.source_sentence, demos, wordbyword, grammar)
    messages = timer.run("prompt", lambda: build_prompt(kind, fields_, cfg.templates_dir))
    if extra_instruction:
        last = messages[-1]
        messages[-1] = ChatMessage(last.role, f"{last.content}\n{extra_instruction}")
    return PreparedPrompt(gloss.source_sentence, gloss, tuple(messages), tuple(timer.stages), timer.timings)


def _request(cfg: PipelineConfig, messages: Sequence[ChatMessage]) -> CompletionRequest:
    return CompletionRequest(tuple(messages), cfg.temperature, cfg.n_samples, cfg.model)


def complete_and_extract(
    messages: Sequence[ChatMessage], cfg: PipelineConfig, backend: Backend
) -> tuple[str, str, bool, int]:
    """Returns (raw output, extracted text, clean, attempts); one reminder retry when unclean."""
    raw = backend.complete(_request(cfg, messages)).text
    extraction = extract_delimited(raw)
    attempts = 1
    if not extraction.clean and cfg.retry_on_unclean:
        retry = list(messages) + [ChatMessage("assistant", raw), ChatMessage("user", RETRY_REMINDER)]
        raw = backend.complete(_request(cfg, retry)).text
        extraction = extract_delimited(raw)
        attempts = 2
    return raw, extraction.text, extraction.clean, attempts


def translate(
    sentence: str,
    cfg: PipelineConfig,
    backend: Backend,
    resources: Resources | None = None,
) -> TranslationResult:
    prepared = prepare(sentence, cfg, backend, resources)
    timings = dict(prepared.timings)
    started = time.perf_counter()
    raw, text, clean, attempts = complete_and_extract(prepared.messages, cfg, backend)
    timings["complete"] = (time.perf_counter() - started) * 1000
    return TranslationResult(
        source=sentence.strip(),
        gloss=prepared.gloss,
        prompt_kind=cfg.prompt_kind,
        raw_output=raw,
        translation=text,
        clean=clean,
        attempts=attempts,
        stages=prepared.stages + ("complete",),
        timings=timings,
    )


def parallel_map(fn: Callable[[Any], Any], items: Sequence[Any], jobs: int = 1) -> list[Any]:
    """Apply ``fn`` to each item with ``jobs`` threads, keeping input order."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def translate_many(
    sentences: Sequence[str],
    cfg: PipelineConfig,
    backend: Backend,
    resources: Resources | None = None,
    jobs: int | None = None,
) -> list[TranslationResult]:
    res = resources or Resources(cfg)
    return parallel_map(lambda s: translate(s, cfg, backend, res), list(sentences), jobs or cfg.jobs)


def make_backend(cfg: PipelineConfig, kind: str | None = None) -> Backend:
    kind = kind or cfg.backend
    if kind == "mock":
        script = load_mock_script(cfg.mock_script) if cfg.mock_script else {}
        return make_mock(script, cfg.mock_fallback, cfg.mock_fixed)
    if kind == "http":
        return HttpBackend.from_env(model=cfg.model) if cfg.model else HttpBackend.from_env()
    raise ConfigError(f"unknown backend {kind!r}")


# ---- downstream tasks -------------------------------------------------------

TASKS = ("translation", "response_selection", "math", "reorder", "keyword_to_text")
LETTERS = "ABCD"

TASK_INSTRUCTIONS = {
    "response_selection": (
        "Here is the beginning of a conversation followed by four candidate responses. "
        "Choose the response that most appropriately continues the conversation. "
        "Answer with the letter of the response (A, B, C, or D)."
    ),
    "math": "Solve the following math word problem step by step. Give the final answer as a single number.",
    "reorder": (
        "The words of the following {source_language} sentence have been shuffled. "
        "Put the words back into the correct {source_language} word order, using every word exactly once. "
        "An approximate {target_language} translation is given as a guide."
    ),
    "keyword_to_text": (
        "Write one {source_language} sentence that uses all of the following {source_language} keywords. "
        "Their approximate {target_language} meaning is given as a guide."
    ),
}


@dataclass(frozen=True)
class TaskOutput:
    task: str
    answer: Any
    text: str
    clean: bool
    raw_output: str
    translations: tuple[str, ...] = ()
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "answer": self.answer,
            "text": self.text,
            "clean": self.clean,
            "raw_output": self.raw_output,
            "translations": list(self.translations),
            "error": self.error,
        }


_CHOICE_ALONE = re.compile(r"^\s*[(\[]?([A-Da-d])[)\].:]?\s*$")
_CHOICE_TOKEN = re.compile(r"(?<![A-Za-z])([A-D])(?![A-Za-z])")
_NUMBER = re.compile(r"-?\d[\d,]*(?:\.\d+)?|-?\.\d+")


def parse_choice(text: str) -> int:
    """A lone letter (any case), or exactly one distinct standalone capital A-D in the text."""
    m = _CHOICE_ALONE.match(text)
    if m:
        return LETTERS.index(m.group(1).upper())
    letters = set(_CHOICE_TOKEN.findall(text))
    if len(letters) == 1:
        return LETTERS.index(letters.pop())
    raise AnswerParseError(f"cannot read a choice letter from {text!r}")


def parse_number(text: str) -> int | float:
    """The last numeric token of ``text``; thousands separators are allowed."""
    tokens = _NUMBER.findall(text)
    if not tokens:
        raise AnswerParseError(f"no number in {text!r}")
    raw = tokens[-1].replace(",", "").rstrip(".")
    try:
        value = float(raw)
    except ValueError:
        raise AnswerParseError(f"bad number {tokens[-1]!r}") from None
    return int(value) if value.is_integer() and "." not in raw else value


def _instruction(task: str, cfg: PipelineConfig) -> str:
    return TASK_INSTRUCTIONS[task].format(source_language=cfg.source_language, target_language=cfg.target_language)


def _selection_text(context_lines: Sequence[str], choices: Sequence[str]) -> str:
    lines = ["Context:", *context_lines, "", "Responses:"]
    lines.extend(f"{LETTERS[i]}. {c}" for i, c in enumerate(choices))
    return "\n".join(lines)


def _task_text(task: str, item: Any, translate_fn: Callable[[str], str] | None) -> tuple[str, tuple[str, ...]]:
    """Text handed to the task prompt, and the translations made to build it."""
    tr = translate_fn or (lambda s: s)
    made: list[str] = []

    def t(s: str) -> str:
        out = tr(s)
        if translate_fn is not None:
            made.append(out)
        return out

    if task == "response_selection":
        context = [t(line) for line in item.context.split("\n") if line.strip()]
        choices = [t(c) for c in item.choices]
        return _selection_text(context, choices), tuple(made)
    if task == "math":
        return t(item.question), tuple(made)
    if task == "reorder":
        if translate_fn is None:
            return item.shuffled, ()
        return f"Shuffled sentence: {item.shuffled}\nApproximate translation: {t(item.shuffled)}", tuple(made)
    if task == "keyword_to_text":
        keywords = ", ".join(item.keywords)
        if translate_fn is None:
            return keywords, ()
        return f"Keywords: {keywords}\nApproximate meaning: {t(' '.join(item.keywords))}", tuple(made)
    raise ConfigError(f"unknown task {task!r}")


def _parse_answer(task: str, text: str) -> Any:
    if task == "response_selection":
        return parse_choice(text)
    if task == "math":
        return parse_number(text)
    return text


def run_downstream(
    task: str,
    item: Any,
    cfg: PipelineConfig,
    backend: Backend,
    resources: Resources | None = None,
) -> TaskOutput:
    """Translate the item, then ask for the task answer (or do both in one prompt with ``single_prompt``).

    Answer parse failures are recorded on the output, never raised.
    """
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}")
    res = resources or Resources(cfg)
    if task == "translation":
        result = translate(item, cfg, backend, res)
        return TaskOutput(task, result.translation, result.translation, result.clean, result.raw_output, (result.translation,))

    instruction = _instruction(task, cfg)
    if cfg.single_prompt:
        source_text, translations = _task_text(task, item, None)
        prepared = prepare(source_text, cfg, backend, res, extra_instruction=instruction)
        messages = prepared.messages
    else:
        source_text, translations = _task_text(task, item, lambda s: translate(s, cfg, backend, res).translation)
        messages = tuple(build_task_prompt(instruction, source_text, cfg.templates_dir))
    raw, text, clean, _ = complete_and_extract(messages, cfg, backend)
    try:
        answer = _parse_answer(task, text)
        error = None
    except AnswerParseError as exc:
        answer, error = None, str(exc)
    return TaskOutput(task, answer, text, clean, raw, translations, error)


def run_downstream_many(
    task: str, items: Sequence[Any], cfg: PipelineConfig, backend: Backend, resources: Resources | None = None
) -> list[TaskOutput]:
    res = resources or Resources(cfg)
    return parallel_map(lambda it: run_downstream(task, it, cfg, backend, res), list(items), cfg.jobs)


def write_jsonl(records: Iterable[Any], out) -> None:
    for r in records:
        d = r.to_dict() if hasattr(r, "to_dict") else r
        out.write(json.dumps(d, ensure_ascii=False, sort_keys=True) + "\n")


def with_overrides(cfg: PipelineConfig, **changes: Any) -> PipelineConfig:
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})

