"""Linguistic-description-augmented translation for low-resource languages.

Morphological analysis, dictionary glossing, grammar selection and prompt
construction around a pluggable chat-completion backend, plus the scoring
and benchmark tooling to evaluate it.
"""

__version__ = "0.1.0"
