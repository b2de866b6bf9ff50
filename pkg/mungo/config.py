"""Configuration and constants for the Mungo checker.

This module defines the surface-language keywords, the names the runtime
reserves for the entry point, and the harness configuration used by the
command-line front door.
"""

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Final

# Source files
SOURCE_SUFFIX: Final[str] = ".mungo"
EXPECT_SUFFIX: Final[str] = ".expect"
SOURCE_ENCODING: Final[str] = "utf-8"

# Reserved words of the surface syntax
KEYWORDS: Final[frozenset[str]] = frozenset(
    {
        "class",
        "enum",
        "new",
        "if",
        "else",
        "switch",
        "continue",
        "true",
        "false",
        "null",
        "unit",
        "void",
        "bool",
        "end",
    }
)

# Entry point
MAIN_CLASS: Final[str] = "Main"
MAIN_METHOD: Final[str] = "main"
MAIN_PARAMETER: Final[str] = "x"
MAIN_OBJECT: Final[str] = "o0"
OBJECT_PREFIX: Final[str] = "o"

# Name bound to the class under check while typing method bodies
THIS: Final[str] = "this"

# Top class used to check generic classes; not a valid identifier
TOP_CLASS: Final[str] = "⊤"

# Interpreter budget
DEFAULT_MAX_STEPS: Final[int] = 100_000
MAX_STEPS_ENV_VAR: Final[str] = "MUNGO_MAX_STEPS"

# Corpus runner
PROJECT_ROOT: Final[Path] = Path(__file__).parent.parent
DEFAULT_CORPUS_DIR: Final[Path] = PROJECT_ROOT / "corpus"
DEFAULT_CORPUS_WORKERS: Final[int] = 4


@dataclass(frozen=True)
class HarnessConfig:
    """Configuration for running, verifying and regression-testing programs.

    Attributes:
        max_steps: Reduction budget before a run is reported as Budget
        trace_enabled: Whether to record one trace line per reduction step
        wtc_every_step: Whether verify re-checks configuration typing each step
        corpus_dir: Directory scanned by the corpus command
        seed: Seed for generated test programs
        workers: Number of corpus cases executed concurrently
    """

    max_steps: int = DEFAULT_MAX_STEPS
    trace_enabled: bool = False
    wtc_every_step: bool = False
    corpus_dir: Path = field(default=DEFAULT_CORPUS_DIR)
    seed: int = 0
    workers: int = DEFAULT_CORPUS_WORKERS

    def __post_init__(self) -> None:
        """Validate configuration parameters."""
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if self.workers <= 0:
            raise ValueError("workers must be positive")

    @classmethod
    def from_env(cls, **overrides: object) -> "HarnessConfig":
        """Build a configuration honouring ``MUNGO_MAX_STEPS``.

        Args:
            **overrides: Field values that take precedence over the environment

        Returns:
            The resulting configuration

        Raises:
            ValueError: If the environment variable is not a positive integer
        """
        values: dict[str, object] = {}
        raw = os.environ.get(MAX_STEPS_ENV_VAR)
        if raw is not None and raw.strip():
            try:
                values["max_steps"] = int(raw)
            except ValueError as e:
                raise ValueError(
                    f"{MAX_STEPS_ENV_VAR} must be an integer, got {raw!r}"
                ) from e
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)  # type: ignore[arg-type]


# Default configuration
DEFAULT_HARNESS_CONFIG = HarnessConfig()
