"""Checking, verification and corpus regression.

``verify`` runs an accepted program and audits every configuration it
passes through: no run-time error may be derivable, the configuration must
stay well formed, linear objects must be referenced exactly once and,
optionally, the configuration must be well typed. Any failed audit is a
:class:`SoundnessViolation` and points at a bug in the checker or the
interpreter.

Corpus cases are ``.mungo`` files paired with an ``.expect`` sidecar::

    accept
    reject FieldNotAvailable,FieldMisused
    run Stuck:NullCall1
    max-steps 1000
"""

from __future__ import annotations

import asyncio
import logging
import random
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from enum import StrEnum
from pathlib import Path

from tqdm import tqdm

from mungo.config import (
    DEFAULT_HARNESS_CONFIG,
    EXPECT_SUFFIX,
    SOURCE_ENCODING,
    SOURCE_SUFFIX,
    HarnessConfig,
)
from mungo.errors import (
    Diagnostic,
    DiagnosticError,
    ExpectationError,
    sort_diagnostics,
)
from mungo.interpreter import (
    Configuration,
    RunOutcome,
    RunStatus,
    linearity_violations,
    run,
    well_formed_configuration,
)
from mungo.monitor import check_error
from mungo.parser import parse_file, parse_program
from mungo.runtime_typing import WellTypedChecker
from mungo.syntax import Program
from mungo.typechecker import ProgramCheck, type_program

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# Checking
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckReport:
    """Result of parsing and typing a program.

    Attributes:
        program: The parsed program, or ``None`` if parsing failed
        diagnostics: Every problem found, sorted
        typing: Per-class typing results when the program parsed
    """

    program: Program | None
    diagnostics: tuple[Diagnostic, ...]
    typing: ProgramCheck | None = None

    @property
    def accepted(self) -> bool:
        return self.program is not None and not self.diagnostics

    @property
    def parse_failed(self) -> bool:
        """Whether the program was rejected before typing."""
        return self.program is None

    @property
    def codes(self) -> frozenset[str]:
        return frozenset(d.code.value for d in self.diagnostics)


def _check(load: Callable[[], Program]) -> CheckReport:
    try:
        program = load()
    except DiagnosticError as e:
        return CheckReport(None, tuple(sort_diagnostics(e.diagnostics)))
    typing = type_program(program)
    return CheckReport(program, tuple(typing.diagnostics), typing)


def check_source(text: str, file: str = "<input>") -> CheckReport:
    """Parse and type ``text``."""
    return _check(lambda: parse_program(text, file))


def check_path(path: Path) -> CheckReport:
    """Parse and type the file at ``path``."""
    return _check(lambda: parse_file(path))


# --------------------------------------------------------------------------
# Verification
# --------------------------------------------------------------------------


class ViolationCheck(StrEnum):
    MONITOR = "monitor"
    WELL_FORMED = "well-formed"
    LINEARITY = "linearity"
    WELL_TYPED = "well-typed"
    PROTOCOL_COMPLETION = "protocol-completion"


@dataclass(frozen=True)
class SoundnessViolation:
    """A per-step audit that failed on an accepted program."""

    step: int
    check: ViolationCheck
    detail: str

    def __str__(self) -> str:
        return f"step {self.step}: {self.check}: {self.detail}"


@dataclass(frozen=True)
class VerifyReport:
    """Outcome of :func:`verify`.

    Attributes:
        accepted: Whether the program type checked
        diagnostics: Checker diagnostics (empty when accepted)
        outcome: The run, when the program was accepted and ran to an end
        violations: Failed audits; the run stops at the first failing step
    """

    accepted: bool
    diagnostics: tuple[Diagnostic, ...] = ()
    outcome: RunOutcome | None = None
    violations: tuple[SoundnessViolation, ...] = ()

    @property
    def ok(self) -> bool:
        return (
            self.accepted
            and not self.violations
            and self.outcome is not None
            and self.outcome.status is RunStatus.TERMINAL
        )


class _ViolationFound(Exception):
    def __init__(self, violations: list[SoundnessViolation]) -> None:
        super().__init__(str(violations[0]))
        self.violations = violations


class StepAuditor:
    """Audits each configuration of a run; raises on the first failing step."""

    def __init__(self, program: Program, wtc_every_step: bool) -> None:
        self.program = program
        self.typing = WellTypedChecker(program) if wtc_every_step else None
        self.audited = 0

    def audit(self, step: int, config: Configuration) -> list[SoundnessViolation]:
        found: list[SoundnessViolation] = []
        fault = check_error(config)
        if fault is not None:
            found.append(SoundnessViolation(step, ViolationCheck.MONITOR, fault.report(step)))
        found.extend(
            SoundnessViolation(step, ViolationCheck.WELL_FORMED, reason)
            for reason in well_formed_configuration(self.program, config)
        )
        found.extend(
            SoundnessViolation(step, ViolationCheck.LINEARITY, reason)
            for reason in linearity_violations(config)
        )
        if self.typing is not None:
            found.extend(
                SoundnessViolation(step, ViolationCheck.WELL_TYPED, d.message)
                for d in self.typing.check(config)
            )
        self.audited += 1
        return found

    def __call__(self, step: int, config: Configuration) -> None:
        found = self.audit(step, config)
        if found:
            raise _ViolationFound(found)


def verify(program: Program, config: HarnessConfig = DEFAULT_HARNESS_CONFIG) -> VerifyReport:
    """Type ``program`` and, if accepted, run it under the step auditor."""
    typing = type_program(program)
    if not typing.ok:
        return VerifyReport(False, tuple(typing.diagnostics))
    auditor = StepAuditor(program, config.wtc_every_step)
    try:
        outcome = run(program, config.max_steps, trace=config.trace_enabled, observer=auditor)
    except _ViolationFound as found:
        logger.error("soundness violation: %s", found.violations[0])
        return VerifyReport(True, violations=tuple(found.violations))
    logger.debug("audited %d configurations", auditor.audited)
    violations: list[SoundnessViolation] = []
    if outcome.stuck is not None:
        violations.append(
            SoundnessViolation(
                outcome.steps,
                ViolationCheck.MONITOR,
                f"stuck: {outcome.stuck.reason} ({outcome.stuck.detail})",
            )
        )
    if outcome.protocols_completed is False:
        violations.append(
            SoundnessViolation(
                outcome.steps,
                ViolationCheck.PROTOCOL_COMPLETION,
                "some object's usage is not end at termination",
            )
        )
    return VerifyReport(True, outcome=outcome, violations=tuple(violations))


def verify_path(path: Path, config: HarnessConfig = DEFAULT_HARNESS_CONFIG) -> VerifyReport:
    """Parse ``path`` and :func:`verify` it.

    Raises:
        DiagnosticError: If the file cannot be read or parsed
    """
    return verify(parse_file(path), config)


# --------------------------------------------------------------------------
# Expectations
# --------------------------------------------------------------------------


class ExpectKind(StrEnum):
    ACCEPT = "accept"
    REJECT = "reject"
    RUN = "run"


RUN_OUTCOMES = ("Terminal", "Budget", "Stuck:")


@dataclass(frozen=True)
class Expectation:
    """Parsed ``.expect`` sidecar."""

    kind: ExpectKind
    codes: frozenset[str] = frozenset()
    outcome: str | None = None
    max_steps: int | None = None

    def __str__(self) -> str:
        if self.kind is ExpectKind.REJECT:
            return f"reject {','.join(sorted(self.codes))}"
        if self.kind is ExpectKind.RUN:
            return f"run {self.outcome}"
        return "accept"


def parse_expectation(text: str, source: str = "<expect>") -> Expectation:
    """Parse sidecar text.

    Raises:
        ExpectationError: If the text does not follow the sidecar format
    """
    lines = [
        line.strip()
        for line in text.splitlines()
        if line.strip() and not line.strip().startswith("#")
    ]
    if not lines:
        raise ExpectationError(f"{source}: empty expectation")
    head, *rest = lines
    word, _, argument = head.partition(" ")
    argument = argument.strip()
    max_steps: int | None = None
    for line in rest:
        key, _, value = line.partition(" ")
        if key != "max-steps" or not value.strip().isdigit() or int(value) <= 0:
            raise ExpectationError(f"{source}: unexpected line {line!r}")
        max_steps = int(value)
    match word:
        case "accept" if not argument:
            return Expectation(ExpectKind.ACCEPT, max_steps=max_steps)
        case "reject" if argument:
            codes = frozenset(c.strip() for c in argument.split(",") if c.strip())
            return Expectation(ExpectKind.REJECT, codes=codes, max_steps=max_steps)
        case "run" if argument.startswith(RUN_OUTCOMES):
            return Expectation(ExpectKind.RUN, outcome=argument, max_steps=max_steps)
    raise ExpectationError(f"{source}: cannot parse {head!r}")


def load_expectation(source: Path) -> Expectation:
    """Read the sidecar next to ``source``.

    Raises:
        ExpectationError: If the sidecar is missing or malformed
    """
    path = source.with_suffix(EXPECT_SUFFIX)
    try:
        text = path.read_text(encoding=SOURCE_ENCODING)
    except FileNotFoundError:
        raise ExpectationError(f"missing expectation file {path.name}") from None
    return parse_expectation(text, path.name)


# --------------------------------------------------------------------------
# Corpus
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CaseResult:
    """Outcome of one corpus case."""

    name: str
    passed: bool
    expected: str
    actual: str
    details: tuple[str, ...] = field(default_factory=tuple)


def evaluate_case(path: Path, config: HarnessConfig = DEFAULT_HARNESS_CONFIG) -> CaseResult:
    """Check one corpus file against its sidecar."""
    name = path.stem
    try:
        expected = load_expectation(path)
    except ExpectationError as e:
        return CaseResult(name, False, "?", "-", (str(e),))
    if expected.max_steps is not None:
        config = replace(config, max_steps=expected.max_steps)
    report = check_path(path)

    if expected.kind is ExpectKind.RUN:
        if report.program is None:
            return CaseResult(
                name, False, str(expected), "parse failure", _formatted(report.diagnostics)
            )
        outcome = run(report.program, config.max_steps)
        actual = f"run {outcome.kind}"
        return CaseResult(name, actual == str(expected), str(expected), actual)

    if not report.accepted:
        actual = f"reject {','.join(sorted(report.codes))}"
        passed = expected.kind is ExpectKind.REJECT and report.codes == expected.codes
        return CaseResult(name, passed, str(expected), actual, _formatted(report.diagnostics))

    if expected.kind is ExpectKind.REJECT:
        return CaseResult(name, False, str(expected), "accept")
    assert report.program is not None
    verified = verify(report.program, config)
    if not verified.ok:
        status = verified.outcome.kind if verified.outcome else "violation"
        details = tuple(str(v) for v in verified.violations)
        return CaseResult(name, False, "accept", f"accept, verify {status}", details)
    return CaseResult(name, True, "accept", "accept")


def _formatted(diagnostics: Sequence[Diagnostic]) -> tuple[str, ...]:
    return tuple(d.format() for d in diagnostics)


def corpus_files(directory: Path) -> list[Path]:
    return sorted(directory.glob(f"*{SOURCE_SUFFIX}"))


async def run_corpus(
    directory: Path,
    config: HarnessConfig = DEFAULT_HARNESS_CONFIG,
    show_progress: bool = True,
) -> list[CaseResult]:
    """Evaluate every case in ``directory`` concurrently.

    Cases start in an order shuffled by ``config.seed``; results are
    returned sorted by case name.
    """
    paths = corpus_files(directory)
    order = list(paths)
    random.Random(config.seed).shuffle(order)
    semaphore = asyncio.Semaphore(config.workers)
    logger.info("running %d corpus cases with %d workers", len(paths), config.workers)

    with tqdm(total=len(paths), desc="Corpus", unit="case", disable=not show_progress) as pbar:

        async def run_one(path: Path) -> CaseResult:
            async with semaphore:
                result = await asyncio.to_thread(evaluate_case, path, config)
            pbar.update(1)
            return result

        gathered = await asyncio.gather(*(run_one(p) for p in order), return_exceptions=True)

    results: list[CaseResult] = []
    for path, result in zip(order, gathered, strict=True):
        if isinstance(result, CaseResult):
            results.append(result)
        elif isinstance(result, Exception):
            logger.error("case %s crashed: %s", path.stem, result)
            results.append(CaseResult(path.stem, False, "?", "crash", (repr(result),)))
        else:
            raise result
    return sorted(results, key=lambda r: r.name)


def run_corpus_sync(
    directory: Path,
    config: HarnessConfig = DEFAULT_HARNESS_CONFIG,
    show_progress: bool = True,
) -> list[CaseResult]:
    return asyncio.run(run_corpus(directory, config, show_progress))
