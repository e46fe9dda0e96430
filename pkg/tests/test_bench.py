import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lingokit.bench import (
    ResponseSelectionItem,
    build_reorder,
    build_response_selection,
    load_dialogs,
    load_keyword_items,
    load_math_items,
    load_parallel,
    load_reorder_items,
    load_response_selection_items,
    shuffle_tokens,
    write_items,
    write_manifest,
)
from lingokit.errors import AlignmentError, InsufficientDataError, ParseError

DIALOGS = [["hello", "hi there", "how are you"], ["is it raining", "yes it is", "take an umbrella"]]


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_parallel_tsv(tmp_path):
    corpus = load_parallel(write(tmp_path / "p.tsv", "a\tA\nb\tB\n\nc\tC\n"))
    assert corpus.pairs == (("a", "A"), ("b", "B"), ("c", "C"))
    assert corpus.sources == ["a", "b", "c"]


def test_parallel_two_files(tmp_path):
    src = write(tmp_path / "s.txt", "a\nb\n")
    assert len(load_parallel(src, write(tmp_path / "t.txt", "A\nB\n"))) == 2
    with pytest.raises(AlignmentError):
        load_parallel(src, write(tmp_path / "u.txt", "A\n"))


@pytest.mark.parametrize("text", ["a\t\n", "a\n", "a\tb\tc\n", " \tb\n"])
def test_parallel_bad_lines(tmp_path, text):
    with pytest.raises(ParseError):
        load_parallel(write(tmp_path / "p.tsv", text))


def test_response_selection_two_dialogs():
    items = build_response_selection(DIALOGS, seed=3)
    assert len(items) == 4
    golds = [it.gold for it in items]
    assert golds == ["hi there", "how are you", "yes it is", "take an umbrella"]
    assert items[1].context == "hello\nhi there"
    for it, dialog, other in zip(items, [0, 0, 1, 1], [1, 1, 0, 0]):
        distractors = [c for i, c in enumerate(it.choices) if i != it.gold_index]
        assert set(distractors) <= set(DIALOGS[other])
        assert len(set(it.choices)) == 4


def test_response_selection_reproducible():
    assert build_response_selection(DIALOGS, 1) == build_response_selection(DIALOGS, 1)


def test_response_selection_needs_other_dialogs():
    with pytest.raises(InsufficientDataError):
        build_response_selection([DIALOGS[0]], 0)
    with pytest.raises(InsufficientDataError):
        build_response_selection([["a", "b"], ["c"]], 0)


def test_gold_positions_spread():
    dialogs = [[f"d{d}u{u}" for u in range(5)] for d in range(10)]
    positions = {it.gold_index for it in build_response_selection(dialogs, 0)}
    assert positions == {0, 1, 2, 3}


def test_load_dialogs(tmp_path):
    p = write(tmp_path / "d.txt", "a\nb\n\n\nc\nd\ne\n\n")
    assert load_dialogs(p) == [["a", "b"], ["c", "d", "e"]]


def test_shuffle_forced():
    rng = random.Random(0)
    assert shuffle_tokens(["a", "b"], rng) == ["b", "a"]
    assert shuffle_tokens(["a", "a"], rng) == ["a", "a"]


@given(st.lists(st.sampled_from("abcde"), min_size=2, max_size=10), st.integers(0, 1000))
def test_property_reorder_is_permutation(tokens, seed):
    (item,) = build_reorder([" ".join(tokens)], seed) or [None]
    assert sorted(item.shuffled.split()) == sorted(tokens)
    if len(set(tokens)) > 1:
        assert item.shuffled != item.original


def test_reorder_reproducible_and_skips_single_words():
    sents = ["the cat sat on the mat", "hello", "a b c"]
    a, b = build_reorder(sents, 5), build_reorder(sents, 5)
    assert a == b and len(a) == 2


def test_math_items(tmp_path):
    lines = "".join(json.dumps({"question": f"q{i}", "answer": i * 1.5}) + "\n" for i in range(20))
    assert len(load_math_items(write(tmp_path / "m.jsonl", lines))) == 20
    with pytest.raises(ParseError):
        load_math_items(write(tmp_path / "bad.jsonl", '{"question": "q"}\n'))
    with pytest.raises(ParseError):
        load_math_items(write(tmp_path / "bad2.jsonl", '{"question": "q", "answer": true}\n'))


def test_keyword_items(tmp_path):
    (item,) = load_keyword_items(write(tmp_path / "k.jsonl", '{"keywords": ["dog", "run"], "original": "the dog runs"}\n'))
    assert item.keywords == ("dog", "run")
    with pytest.raises(ParseError):
        load_keyword_items(write(tmp_path / "k2.jsonl", '{"keywords": [], "original": "x"}\n'))


def test_roundtrip_files(tmp_path):
    items = build_response_selection(DIALOGS, 2)
    write_items(items, tmp_path / "rs.jsonl")
    assert load_response_selection_items(tmp_path / "rs.jsonl") == items
    reorder = build_reorder(["a b c d"], 2)
    write_items(reorder, tmp_path / "ro.jsonl")
    assert load_reorder_items(tmp_path / "ro.jsonl") == reorder
    with pytest.raises(ParseError):
        load_reorder_items(write(tmp_path / "bad.jsonl", '{"shuffled": "a b", "original": "a c"}\n'))
    with pytest.raises(ParseError):
        load_response_selection_items(write(tmp_path / "bad2.jsonl", '{"context": "c", "choices": ["a"], "gold_index": 0}\n'))


def test_item_validation():
    with pytest.raises(ValueError):
        ResponseSelectionItem("c", ("a", "b", "c", "d"), 4)


def test_manifest(tmp_path):
    inp = write(tmp_path / "in.txt", "x\n")
    art = write(tmp_path / "out.jsonl", "y\n")
    m = write_manifest(tmp_path / "manifest.json", [art], 7, [inp])
    assert m["seed"] == 7
    assert set(m["artifacts"]) == {"out.jsonl"} and len(m["inputs"]["in.txt"]) == 64
    assert json.loads((tmp_path / "manifest.json").read_text()) == m
