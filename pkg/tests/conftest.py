import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from toy import (  # noqa: E402
    ENGLISH_ATT,
    GITKSAN_ATT,
    GITKSAN_LEXICON,
    MANCHU_LEXICON,
    MANCHU_RULES,
    toy_att,
    toy_lexicon_lines,
    write_toy_language,
)

from lingokit.fst import MorphologyConfig, load_transducer  # noqa: E402
from lingokit.lexicon import load_lexicon  # noqa: E402
from lingokit.orthography import load_rules  # noqa: E402

GOLDEN = Path(__file__).parent / "golden"
GITKSAN_MORPHOLOGY = MorphologyConfig(joiner="-", feature_tags=frozenset({"PASS", "1PL"}))


def jsonl(rows):
    return [json.dumps(r, ensure_ascii=False) for r in rows]


@pytest.fixture
def english_fst():
    return load_transducer(ENGLISH_ATT, name="english")


@pytest.fixture
def gitksan_fst():
    return load_transducer(GITKSAN_ATT, name="gitksan")


@pytest.fixture
def gitksan_lexicon():
    return load_lexicon(jsonl(GITKSAN_LEXICON), language="Gitksan")


@pytest.fixture
def manchu_lexicon():
    return load_lexicon(jsonl(MANCHU_LEXICON), language="Manchu")


@pytest.fixture
def manchu_rules():
    return load_rules(MANCHU_RULES, name="manchu")


@pytest.fixture
def toy_fst():
    return load_transducer(toy_att(), name="toy")


@pytest.fixture
def toy_lexicon():
    return load_lexicon(toy_lexicon_lines(), language="Toyish")


@pytest.fixture
def toy_dir(tmp_path):
    write_toy_language(tmp_path)
    return tmp_path


@pytest.fixture
def toy_cfg_path(toy_dir):
    return toy_dir / "toy.cfg"
