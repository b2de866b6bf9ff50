"""Performance benchmarks for checking and running programs.

These tests time the hot paths and keep them within generous limits.

Run with: pytest tests/performance/ -v
"""

import time
from collections.abc import Callable

import pytest

from mungo.config import DEFAULT_CORPUS_DIR
from mungo.interpreter import initial_configuration, run
from mungo.parser import parse_file, parse_program
from mungo.printer import print_program
from mungo.runtime_typing import WellTypedChecker
from mungo.typechecker import type_program
from mungo.usages import reachable_states, usage_graph

FILEREADER = parse_file(DEFAULT_CORPUS_DIR / "filereader.mungo")
FILEREADER_SOURCE = print_program(FILEREADER)


class BenchmarkResult:
    """Container for benchmark results."""

    def __init__(self, name: str, duration: float, iterations: int) -> None:
        self.name = name
        self.duration = duration
        self.iterations = iterations

    @property
    def per_iteration(self) -> float:
        return self.duration / self.iterations

    def __repr__(self) -> str:
        return (
            f"{self.name}: {self.duration:.4f}s total, "
            f"{self.per_iteration * 1000:.4f}ms per iteration"
        )


def benchmark(func: Callable[[], object], iterations: int = 100) -> BenchmarkResult:
    """Run ``func`` ``iterations`` times and measure the total duration."""
    start = time.perf_counter()
    for _ in range(iterations):
        func()
    duration = time.perf_counter() - start
    return BenchmarkResult(getattr(func, "__name__", "anonymous"), duration, iterations)


class TestFrontEndPerformance:
    """Parsing and printing."""

    @pytest.mark.slow
    def test_parse_filereader(self) -> None:
        """Parsing a small program is fast."""
        result = benchmark(lambda: parse_program(FILEREADER_SOURCE), iterations=200)
        print(f"\n{result}")
        assert result.duration < 10.0, f"Parsing too slow: {result.duration}s"

    @pytest.mark.slow
    def test_usage_graph(self) -> None:
        """Building a usage graph is fast."""
        usage = FILEREADER.class_map["File"].usage

        def build() -> None:
            usage_graph(usage)
            reachable_states(usage)

        result = benchmark(build, iterations=500)
        print(f"\n{result}")
        assert result.duration < 10.0, f"Usage graph too slow: {result.duration}s"


class TestCheckerPerformance:
    """Typing whole programs."""

    @pytest.mark.slow
    def test_type_filereader(self) -> None:
        """Typing the file reader is fast."""
        result = benchmark(lambda: type_program(FILEREADER), iterations=100)
        print(f"\n{result}")
        assert result.duration < 20.0, f"Type checking too slow: {result.duration}s"

    def test_type_checking_is_deterministic(self) -> None:
        """Repeated checks produce the same result."""
        first = type_program(FILEREADER)
        second = type_program(FILEREADER)
        assert first.diagnostics == second.diagnostics


class TestInterpreterPerformance:
    """Reduction throughput."""

    @pytest.mark.slow
    def test_spin_loop(self) -> None:
        """Ten thousand steps of a loop finish quickly."""
        program = parse_file(DEFAULT_CORPUS_DIR / "infinite_loop.mungo")

        result = benchmark(lambda: run(program, 10_000), iterations=3)
        print(f"\n{result}")
        assert result.duration < 30.0, f"Interpreter too slow: {result.duration}s"

    @pytest.mark.slow
    def test_configuration_typing_cached(self) -> None:
        """A second check of the same configuration reuses the cache."""
        checker = WellTypedChecker(FILEREADER)
        config = initial_configuration(FILEREADER)

        start1 = time.perf_counter()
        checker.check(config)
        duration1 = time.perf_counter() - start1

        start2 = time.perf_counter()
        checker.check(config)
        duration2 = time.perf_counter() - start2

        print(f"\nFirst check: {duration1:.4f}s, Second check: {duration2:.4f}s")
        assert duration2 < 5.0
