from collections.abc import Callable
from pathlib import Path

import pytest

from mungo.config import DEFAULT_CORPUS_DIR, HarnessConfig
from mungo.parser import parse_file, parse_program
from mungo.syntax import Program

LAMP_CLASS = """
class Lamp {
  {on; end}
  void on() { unit }
}
"""

MAIN_TEMPLATE = """
{extra}

class Main {{
  {{main; end}}
  {fields}
  void main() {{ {body} }}
}}
"""


def main_source(body: str, fields: str = "", extra: str = "") -> str:
    """Source text of a program whose ``Main.main`` runs ``body``."""
    return MAIN_TEMPLATE.format(extra=extra, fields=fields, body=body)


@pytest.fixture
def corpus_dir() -> Path:
    """Directory of the seeded corpus."""
    return DEFAULT_CORPUS_DIR


@pytest.fixture
def corpus_program() -> Callable[[str], Program]:
    """Loader for corpus programs by base name."""

    def load(name: str) -> Program:
        return parse_file(DEFAULT_CORPUS_DIR / f"{name}.mungo")

    return load


@pytest.fixture
def corpus_source() -> Callable[[str], str]:
    """Source text of corpus programs by base name."""

    def read(name: str) -> str:
        return (DEFAULT_CORPUS_DIR / f"{name}.mungo").read_text(encoding="utf-8")

    return read


@pytest.fixture
def filereader(corpus_program: Callable[[str], Program]) -> Program:
    """The file reader program."""
    return corpus_program("filereader")


@pytest.fixture
def make_program() -> Callable[..., Program]:
    """Parse a program built around a ``Main.main`` body."""

    def make(body: str, fields: str = "", extra: str = "") -> Program:
        return parse_program(main_source(body, fields, extra))

    return make


@pytest.fixture
def fast_config() -> HarnessConfig:
    """Harness configuration with a small budget."""
    return HarnessConfig(max_steps=10_000, workers=2)


@pytest.fixture
def lamp_class() -> str:
    """A one-shot class: ``on`` may be called exactly once."""
    return LAMP_CLASS
