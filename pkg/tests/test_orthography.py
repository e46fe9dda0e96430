import pytest
from hypothesis import given
from hypothesis import strategies as st

from lingokit.errors import DuplicateRuleError, ParseError
from lingokit.orthography import RewriteRule, RuleSet, load_rules, nfc, normalize


def test_manchu_rules(manchu_rules):
    assert len(manchu_rules) == 3
    assert [(r.source, r.target) for r in manchu_rules.rules] == [("q", "c"), ("x", "š"), ("v", "ū")]


def test_manchu_normalization(manchu_rules):
    assert normalize("qoohiyan", manchu_rules) == "coohiyan"
    assert normalize("xx", load_rules("x\tš\n")) == "šš"


def test_empty_file():
    assert len(load_rules("")) == 0
    assert len(load_rules("# comment only\n\n")) == 0


def test_duplicate_rule():
    with pytest.raises(DuplicateRuleError):
        load_rules("q\tc\nq\tk\n")


def test_duplicate_after_nfc():
    with pytest.raises(DuplicateRuleError):
        RuleSet((RewriteRule("é", "e"), RewriteRule("é", "e")))


@pytest.mark.parametrize("text", ["q\n", "q\tc\tk\n", "\tc\n"])
def test_malformed(text):
    with pytest.raises(ParseError) as info:
        load_rules(text, name="r.tsv")
    assert info.value.line == 1


def test_longest_match():
    rules = load_rules("a\tx\nab\ty\n")
    assert normalize("ab", rules) == "y"
    assert normalize("aab", rules) == "xy"
    assert normalize("ba", rules) == "bx"


def test_no_rescan():
    assert normalize("cc", load_rules("c\tcc\n")) == "cccc"
    assert normalize("ab", load_rules("a\tb\nb\ta\n")) == "ba"


def test_deletion_rule():
    assert normalize("a-b-c", load_rules("-\t\n")) == "abc"


def test_inverted_drops_deletions(manchu_rules):
    inv = manchu_rules.inverted()
    assert normalize("coohiyan", inv) == "qoohiyan"
    assert len(load_rules("-\t\nx\ty\n").inverted()) == 1


def test_output_is_nfc():
    assert normalize("é", RuleSet()) == "é"


@given(st.text(max_size=40))
def test_empty_rules_identity(text):
    assert normalize(text, RuleSet()) == nfc(text)


@given(st.text(alphabet="abcxyz", max_size=30))
def test_single_char_rules_are_a_map(text):
    rules = load_rules("a\tA\nx\tš\n")
    assert normalize(text, rules) == "".join({"a": "A", "x": "š"}.get(c, c) for c in text)


@given(st.text(alphabet="qxvabc", max_size=30))
def test_idempotent_when_targets_are_fixed_points(text):
    rules = load_rules("q\tc\nx\tš\nv\tū\n")
    once = normalize(text, rules)
    assert normalize(once, rules) == once
