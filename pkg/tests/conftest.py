from pathlib import Path

import pytest

from claimdecomp import default_bank, parse_conllu
from claimdecomp.conllu import SentenceParse

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def rnd_bank():
    return default_bank()


def sent_id(parse: SentenceParse) -> str:
    for comment in parse.comments:
        if comment.startswith("# sent_id"):
            return comment.split("=", 1)[1].strip()
    return ""


@pytest.fixture(scope="session")
def oracle_parses():
    text = (DATA_DIR / "predarg_parses.conllu").read_text(encoding="utf-8")
    return {sent_id(p): p for p in parse_conllu(text)}


@pytest.fixture(scope="session")
def ud_sample_text():
    return (DATA_DIR / "ud_sample.conllu").read_text(encoding="utf-8")
