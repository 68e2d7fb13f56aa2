"""End-to-end grading flow: parse, prompt, complete, score, merge, log.

For each answer block the orchestrator renders the policy prompt, requests a
completion, and parses the awarded points. A response that violates the
POINTS protocol triggers exactly one re-request; if the second response still
carries an off-grid or off-scale value the value is rounded and clamped onto
the grading grid with an audit note, and if no usable value arrives at all
the block is recorded as ungraded (0 points, reason flagged in the merged
document). Solution-registry coverage is validated before the first LLM call.
"""

from dataclasses import dataclass
from fractions import Fraction

from .exercise_format import (
    GradedFeedback,
    extract_blocks,
    format_points,
    merge_feedback,
    parse_odt,
)
from .llm_gateway import (
    GatewayError,
    LLMGateway,
    MissingPointsMarker,
    PointsOffGrid,
    PointsOutOfRange,
    parse_points,
)
from .privacy import scrub_submission
from .prompt_engine import GradingTask, PromptLibrary, SolutionRegistry, render_prompt

__all__ = [
    "GradedAnswer",
    "SubmissionResult",
    "grade_submission",
    "GradingError",
    "MissingSolutionEntry",
    "PointsMismatch",
]


class GradingError(Exception):
    pass


class MissingSolutionEntry(GradingError):
    def __init__(self, answer_id: str):
        super().__init__(f"no model solution registered for answer {answer_id!r}")
        self.answer_id = answer_id


class PointsMismatch(GradingError):
    def __init__(self, answer_id: str, sheet_points: float, registry_points: float):
        super().__init__(
            f"answer {answer_id!r} carries {format_points(sheet_points)} points on the sheet "
            f"but {format_points(registry_points)} in the solution registry"
        )
        self.answer_id = answer_id
        self.sheet_points = sheet_points
        self.registry_points = registry_points


@dataclass(frozen=True)
class GradedAnswer:
    """Outcome for one block: points, feedback, and how it was obtained."""

    answer_id: str
    max_points: float
    awarded_points: float
    feedback_text: str
    attempts: int
    ungraded_reason: str | None = None
    audit_note: str | None = None


@dataclass(frozen=True)
class SubmissionResult:
    exercise_id: int
    answers: tuple
    total_awarded: float
    total_max: float
    score_percent: float
    merged_document: bytes


def _strip_points_suffix(text: str) -> str:
    index = text.rfind("POINTS:")
    return (text[:index] if index >= 0 else text).rstrip()


def _snap_to_grid(value: float, max_points: float) -> float:
    snapped = int(value * 2 + 0.5) / 2 if value >= 0 else 0.0
    return min(max(snapped, 0.0), max_points)


@dataclass(frozen=True)
class _BlockOutcome:
    awarded: float | None  # None marks an ungraded block
    feedback: str          # feedback text, or the failure reason when ungraded
    attempts: int
    audit_note: str | None = None
    gateway_error: GatewayError | None = None


def _grade_block(gateway: LLMGateway, prompt: str, max_points: float) -> _BlockOutcome:
    """Run the request / re-request protocol for one block."""
    attempts = 0

    def request() -> str:
        nonlocal attempts
        response = gateway.complete(prompt)
        attempts += response.attempts
        return response.text

    try:
        text = request()
    except GatewayError as exc:
        attempts += exc.attempts
        reason = f"provider failure after {exc.attempts} attempts: {exc.detail}"
        return _BlockOutcome(None, reason, attempts, gateway_error=exc)

    first_bad_value: float | None = None
    try:
        points = parse_points(text, max_points)
        return _BlockOutcome(points, _strip_points_suffix(text), attempts)
    except (PointsOffGrid, PointsOutOfRange) as exc:
        first_bad_value = exc.value
    except MissingPointsMarker:
        pass

    # The first response violated the POINTS protocol; re-request once.
    try:
        retry_text = request()
    except GatewayError as exc:
        attempts += exc.attempts
        reason = f"provider failure after {exc.attempts} attempts: {exc.detail}"
        return _BlockOutcome(None, reason, attempts, gateway_error=exc)

    try:
        points = parse_points(retry_text, max_points)
        return _BlockOutcome(points, _strip_points_suffix(retry_text), attempts)
    except (PointsOffGrid, PointsOutOfRange) as exc:
        snapped = _snap_to_grid(exc.value, max_points)
        note = f"points adjusted to the grading grid: {exc.value:g} -> {format_points(snapped)}"
        return _BlockOutcome(snapped, _strip_points_suffix(retry_text), attempts, audit_note=note)
    except MissingPointsMarker:
        if first_bad_value is not None:
            snapped = _snap_to_grid(first_bad_value, max_points)
            note = f"points adjusted to the grading grid: {first_bad_value:g} -> {format_points(snapped)}"
            return _BlockOutcome(snapped, _strip_points_suffix(text), attempts, audit_note=note)
        return _BlockOutcome(None, "response carried no POINTS marker after a re-request", attempts)


def grade_submission(
    container_bytes: bytes,
    exercise_id: int,
    registry: SolutionRegistry,
    gateway: LLMGateway,
    *,
    identity_strings=(),
    prompt_library: PromptLibrary | None = None,
    usage_log=None,
    pseudonym: str | None = None,
) -> SubmissionResult:
    """Grade one uploaded document end to end.

    Identity strings are scrubbed from all text before any prompt is
    rendered; the merged feedback document is built from the original,
    unscrubbed container. When ``usage_log`` is given the score row is
    appended (durably) before the result is returned.

    Raises:
        Errors from parse_odt / extract_blocks for malformed documents.
        MissingSolutionEntry / PointsMismatch: pre-flight registry check
            failed; no LLM call has been made.
        GradeBlockMismatch: only if merging fails, which indicates a bug.
    """
    flattened = parse_odt(container_bytes)
    paper = extract_blocks(flattened, exercise_id)

    entries = {}
    for block in paper.blocks:
        entry = registry.get(exercise_id, block.answer_id)
        if entry is None:
            raise MissingSolutionEntry(block.answer_id)
        if entry.max_points != block.max_points:
            raise PointsMismatch(block.answer_id, block.max_points, entry.max_points)
        entries[block.answer_id] = entry

    scrubbed = scrub_submission(flattened, identity_strings)
    scrubbed_paper = extract_blocks(scrubbed, exercise_id)

    graded: list[GradedAnswer] = []
    last_gateway_error: GatewayError | None = None
    for block, scrubbed_block in zip(paper.blocks, scrubbed_paper.blocks):
        entry = entries[block.answer_id]
        task = GradingTask(
            question_text=scrubbed_block.question_text,
            model_answer=entry.model_answer,
            student_answer=scrubbed_block.student_answer,
            max_points=block.max_points,
            policy=entry.policy,
        )
        prompt = render_prompt(task, prompt_library)
        outcome = _grade_block(gateway, prompt, block.max_points)
        if outcome.gateway_error is not None:
            last_gateway_error = outcome.gateway_error
        if outcome.awarded is None:
            graded.append(
                GradedAnswer(
                    answer_id=block.answer_id,
                    max_points=block.max_points,
                    awarded_points=0.0,
                    feedback_text="",
                    attempts=outcome.attempts,
                    ungraded_reason=outcome.feedback,
                )
            )
        else:
            graded.append(
                GradedAnswer(
                    answer_id=block.answer_id,
                    max_points=block.max_points,
                    awarded_points=outcome.awarded,
                    feedback_text=outcome.feedback,
                    attempts=outcome.attempts,
                    audit_note=outcome.audit_note,
                )
            )

    # A fully failed submission is a provider outage, not a graded result.
    if last_gateway_error is not None and all(g.ungraded_reason is not None for g in graded):
        raise last_gateway_error

    merged = merge_feedback(paper, [_to_feedback(g) for g in graded], container_bytes)

    awarded_halves = sum(int(round(g.awarded_points * 2)) for g in graded)
    max_halves = sum(int(round(b.max_points * 2)) for b in paper.blocks)
    score_percent = float(100 * Fraction(awarded_halves, max_halves))

    result = SubmissionResult(
        exercise_id=exercise_id,
        answers=tuple(graded),
        total_awarded=awarded_halves / 2.0,
        total_max=max_halves / 2.0,
        score_percent=score_percent,
        merged_document=merged,
    )
    if usage_log is not None:
        if pseudonym is None:
            raise ValueError("pseudonym required when a usage log is attached")
        usage_log.append(pseudonym, exercise_id, score_percent)
    return result


def _to_feedback(graded: GradedAnswer) -> GradedFeedback:
    if graded.ungraded_reason is not None:
        text = f"NOT GRADED: {graded.ungraded_reason}"
    else:
        text = graded.feedback_text
        if graded.audit_note:
            text = f"{text}\n({graded.audit_note})" if text else f"({graded.audit_note})"
    return GradedFeedback(
        answer_id=graded.answer_id,
        awarded_points=graded.awarded_points,
        feedback_text=text,
    )
