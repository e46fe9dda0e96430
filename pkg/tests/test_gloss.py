import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import GITKSAN_MORPHOLOGY
from toy import GITKSAN_WORD

from lingokit.errors import EmptyInputError
from lingokit.gloss import (
    GlossConfig,
    GlossLine,
    gloss_coverage,
    gloss_sentence,
    render_gloss,
    tokenize,
)
from lingokit.lexicon import MatchKind, TraversalConfig


def test_gitksan_word(gitksan_fst, gitksan_lexicon):
    g = gloss_sentence(GITKSAN_WORD, gitksan_fst, gitksan_lexicon, cfg=GlossConfig(morphology=GITKSAN_MORPHOLOGY))
    (w,) = g.words
    assert w.analyses[0].features == ["PASS", "1PL"]
    defs = {lk.query: lk.matches[0].entry.definitions for lk in w.lookups}
    assert defs == {"sg̲a": ("to block",), "sgi": ("to lie on",)}
    assert all(lk.matches[0].match_kind is MatchKind.EXACT for lk in w.lookups)


def test_unknown_word_without_transducer(gitksan_lexicon):
    g = gloss_sentence("mismaaxwsxw", None, gitksan_lexicon, cfg=GlossConfig(k=2))
    (w,) = g.words
    assert w.analyses == ()
    (lk,) = w.lookups
    assert [m.matched_headword for m in lk.matches] == ["maaxwsxw", "maxwsxw"]
    assert all(m.match_kind is MatchKind.FUZZY for m in lk.matches)


def test_empty_sentence(gitksan_lexicon):
    with pytest.raises(EmptyInputError):
        gloss_sentence("", None, gitksan_lexicon)
    with pytest.raises(EmptyInputError):
        gloss_sentence("   ", None, gitksan_lexicon)


def test_qoohiyan_render(manchu_lexicon, manchu_rules):
    g = gloss_sentence("qoohiyan", None, manchu_lexicon)
    text = render_gloss(g)
    assert "Korea" in text
    assert "related: solho = Korean" in text
    assert text == "qoohiyan\nqoohiyan: qoohiyan (0) = Korea\nrelated: solho = Korean"


def test_render_empty():
    assert render_gloss(GlossLine("", ())) == ""


def test_traversal_disabled(manchu_lexicon):
    cfg = GlossConfig(traversal=TraversalConfig(enabled=False))
    assert "related" not in render_gloss(gloss_sentence("qoohiyan", None, manchu_lexicon, cfg=cfg))


def test_normalization_before_lookup(toy_fst, toy_lexicon):
    from lingokit.orthography import load_rules

    g = gloss_sentence("xemiti", toy_fst, toy_lexicon, load_rules("x\tsh\n"))
    assert g.source_sentence == "shemiti"
    assert g.words[0].analyses[0].raw == "shemi +Noun +Pl"
    assert g.words[0].has_exact_match


def test_tokenize():
    assert tokenize('"hiroti lutu," ruka.') == ['"', "hiroti", "lutu", ",", '"', "ruka", "."]
    assert tokenize("ts'ax sg̲a") == ["ts'ax", "sg̲a"]
    assert tokenize("...") == [".", ".", "."]
    assert tokenize("") == []


@given(st.lists(st.sampled_from(["kala", "moka", "ruka", "zz", "!", "pani", "?", "lutu"]), min_size=1, max_size=8))
def test_word_order_matches_tokens(words):
    from toy import toy_lexicon_lines

    from lingokit.lexicon import load_lexicon

    lex = load_lexicon(toy_lexicon_lines())
    sentence = " ".join(words)
    g = gloss_sentence(sentence, None, lex)
    assert [w.surface for w in g.words] == tokenize(sentence)


def test_punctuation_not_looked_up(toy_lexicon):
    g = gloss_sentence("kala !", None, toy_lexicon)
    assert g.words[1].is_punctuation and g.words[1].lookups == ()


def test_json_roundtrip(toy_fst, toy_lexicon):
    g = gloss_sentence("kalati mirona moka.", toy_fst, toy_lexicon)
    again = GlossLine.from_dict(json.loads(g.to_json()))
    assert again.to_json() == g.to_json()
    assert render_gloss(again) == render_gloss(g)


def test_coverage(toy_fst, toy_lexicon):
    full = gloss_sentence("kala zzzz .", toy_fst, toy_lexicon)
    assert gloss_coverage([full]) == 0.5
    assert gloss_coverage([]) == 0.0
