import threading

import pytest

from toy import TOY_GRAMMAR

from lingokit.errors import ParseError, UnknownChapterError
from lingokit.grammar import (
    GrammarDoc,
    SummaryCache,
    TokenBudget,
    default_cache,
    estimate_tokens,
    load_grammar,
    select_grammar,
    truncate_to_budget,
)

TWO = "== Morphology ==\nSuffixes.\n\n== Syntax ==\nSVO order.\n"


def test_chapters():
    doc = load_grammar(TWO)
    assert doc.titles == ["Morphology", "Syntax"]
    with_preamble = load_grammar("Intro text.\n" + TWO)
    assert with_preamble.titles == ["preamble", "Morphology", "Syntax"]


def test_no_delimiters():
    doc = load_grammar("Just prose.\n")
    assert doc.titles == ["preamble"]
    assert doc.chapters[0].body == "Just prose."


def test_empty():
    with pytest.raises(ParseError):
        load_grammar("")
    with pytest.raises(ParseError):
        load_grammar("  \n")


def test_full_text_is_chapters_in_order():
    doc = load_grammar(TOY_GRAMMAR)
    assert doc.full_text == "\n\n".join(c.text() for c in doc.chapters)
    assert doc.full_text.index("Phonology") < doc.full_text.index("Syntax")


def test_grammar_doc_needs_a_chapter():
    with pytest.raises(ValueError):
        GrammarDoc("x", ())


@pytest.mark.parametrize("n,expected", [(0, 0), (8, 2), (9, 3)])
def test_estimate_tokens(n, expected):
    assert estimate_tokens("x" * n, TokenBudget(100, 4)) == expected


def test_budget_validation():
    with pytest.raises(ValueError):
        TokenBudget(0)
    with pytest.raises(ValueError):
        TokenBudget(10, 0)


def test_under_budget_verbatim():
    doc = load_grammar(TWO)
    assert select_grammar(doc, TokenBudget(1000)) == doc.full_text


def test_over_budget_summarized_once(tmp_path):
    doc = load_grammar(TOY_GRAMMAR)
    calls = []

    def llm(messages):
        calls.append(messages)
        return "SUMMARY"

    cache = SummaryCache(tmp_path)
    budget = TokenBudget(10)
    assert select_grammar(doc, budget, llm=llm, cache=cache) == "SUMMARY"
    assert select_grammar(doc, budget, llm=llm, cache=cache) == "SUMMARY"
    assert len(calls) == 1
    # persisted: a fresh cache on the same directory needs no call
    assert select_grammar(doc, budget, llm=llm, cache=SummaryCache(tmp_path)) == "SUMMARY"
    assert len(calls) == 1


def test_over_budget_without_summarizer():
    with pytest.raises(ValueError):
        select_grammar(load_grammar(TOY_GRAMMAR), TokenBudget(5))


def test_long_summary_truncated():
    doc = load_grammar(TOY_GRAMMAR)
    out = select_grammar(doc, TokenBudget(5, 2), llm=lambda m: "y" * 500, cache=SummaryCache())
    assert out == "y" * 10


def test_chapter_restriction():
    doc = load_grammar(TWO)
    assert select_grammar(doc, TokenBudget(1000), chapters=["Morphology"]) == "== Morphology ==\nSuffixes."
    with pytest.raises(UnknownChapterError):
        doc.restrict(["Phonetics"])


def test_cache_key_depends_on_inputs():
    doc = load_grammar(TWO)
    keys = {
        SummaryCache.key(doc, TokenBudget(10), None),
        SummaryCache.key(doc, TokenBudget(11), None),
        SummaryCache.key(doc, TokenBudget(10), ["Syntax"]),
        SummaryCache.key(load_grammar(TOY_GRAMMAR), TokenBudget(10), None),
    }
    assert len(keys) == 4
    assert SummaryCache.key(doc, TokenBudget(10), ["Syntax", "Morphology"]) == SummaryCache.key(
        doc, TokenBudget(10), ["Morphology", "Syntax"]
    )


def test_truncate_on_scalar_boundary():
    assert truncate_to_budget("g̲g̲g̲", TokenBudget(1, 2)) == "g̲"


def test_default_cache_env(tmp_path, monkeypatch):
    monkeypatch.setenv("LINGO_CACHE_DIR", str(tmp_path))
    assert default_cache().directory == tmp_path
    monkeypatch.delenv("LINGO_CACHE_DIR")
    assert default_cache().directory is None


def test_cache_threadsafe(tmp_path):
    cache = SummaryCache(tmp_path)

    def work(i):
        cache.put(f"k{i % 5}", f"v{i % 5}")
        assert cache.get(f"k{i % 5}") == f"v{i % 5}"

    threads = [threading.Thread(target=work, args=(i,)) for i in range(40)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(cache) == 5
