"""Prompt templates and ``###``-delimited answer extraction.

Templates live in ``lingokit/templates/<kind>.txt`` and can be overridden by
pointing ``templates_dir`` at a directory holding files of the same names.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from .errors import MissingFieldError
from .llm import ChatMessage

DELIMITER = "###"
_PLACEHOLDER = re.compile(
    r"\{(source_language|target_language|sentence|demo_sentences|wordbyword|grammar|instruction|task_input)\}"
)


class PromptKind(str, enum.Enum):
    ZERO_SHOT = "zero_shot"
    ZERO_SHOT_COT = "zero_shot_cot"
    FEW_SHOT = "few_shot"
    LINGO_DICT_ONLY = "lingo_dict_only"
    LINGO_FULL = "lingo_full"

    @property
    def uses_gloss(self) -> bool:
        return self in (PromptKind.LINGO_DICT_ONLY, PromptKind.LINGO_FULL)

    @property
    def uses_grammar(self) -> bool:
        return self is PromptKind.LINGO_FULL

    @property
    def uses_demos(self) -> bool:
        return self in (PromptKind.FEW_SHOT, PromptKind.LINGO_DICT_ONLY)


_REQUIRED = {
    PromptKind.ZERO_SHOT: (),
    PromptKind.ZERO_SHOT_COT: (),
    PromptKind.FEW_SHOT: ("demo_sentences",),
    PromptKind.LINGO_DICT_ONLY: ("demo_sentences", "wordbyword"),
    PromptKind.LINGO_FULL: ("grammar", "wordbyword"),
}


@dataclass(frozen=True)
class PromptFields:
    source_language: str
    target_language: str
    sentence: str
    demo_pairs: tuple[tuple[str, str], ...] = ()
    wordbyword: str = ""
    grammar: str = ""


def load_template(name: str, templates_dir: str | Path | None = None) -> str:
    if templates_dir is not None:
        path = Path(templates_dir) / f"{name}.txt"
        if path.exists():
            return path.read_text(encoding="utf-8").rstrip("\n")
    return resources.files("lingokit").joinpath("templates", f"{name}.txt").read_text(encoding="utf-8").rstrip("\n")


def render_demos(pairs: Sequence[tuple[str, str]]) -> str:
    return "\n\n".join(f"{src}\n{tgt}" for src, tgt in pairs)


def substitute(template: str, values: dict[str, str]) -> str:
    """Single-pass placeholder substitution; substituted text is never re-scanned."""

    def repl(m: re.Match) -> str:
        name = m.group(1)
        if name not in values:
            return m.group(0)
        return values[name]

    return _PLACEHOLDER.sub(repl, template)


def system_message(templates_dir: str | Path | None = None) -> ChatMessage:
    return ChatMessage("system", load_template("system", templates_dir))


def build_prompt(
    kind: PromptKind | str, f: PromptFields, templates_dir: str | Path | None = None
) -> list[ChatMessage]:
    kind = PromptKind(kind)
    values = {
        "source_language": f.source_language,
        "target_language": f.target_language,
        "sentence": f.sentence,
        "demo_sentences": render_demos(f.demo_pairs),
        "wordbyword": f.wordbyword,
        "grammar": f.grammar,
    }
    for name in ("source_language", "target_language", "sentence", *_REQUIRED[kind]):
        if not values[name].strip():
            raise MissingFieldError(name)
    user = substitute(load_template(kind.value, templates_dir), values)
    return [system_message(templates_dir), ChatMessage("user", user)]


def build_task_prompt(instruction: str, task_input: str, templates_dir: str | Path | None = None) -> list[ChatMessage]:
    if not instruction.strip():
        raise MissingFieldError("instruction")
    if not task_input.strip():
        raise MissingFieldError("task_input")
    user = substitute(load_template("task", templates_dir), {"instruction": instruction, "task_input": task_input})
    return [system_message(templates_dir), ChatMessage("user", user)]


@dataclass(frozen=True)
class Extraction:
    text: str
    clean: bool


def extract_delimited(output: str) -> Extraction:
    """Text between the last two ``###`` markers; the whole output (clean=False) if there are fewer."""
    parts = output.split(DELIMITER)
    if len(parts) < 3:
        return Extraction(output.strip(), False)
    return Extraction(parts[-2].strip(), True)
