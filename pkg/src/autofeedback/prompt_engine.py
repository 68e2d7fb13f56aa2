"""Grading-prompt rendering from match policies and the model-solution registry.

A prompt has seven fixed sections in fixed order: ``<Role>``, ``<Context>``,
``<Action>``, ``<Output>``, ``<Question>``, ``<Model Answer>``,
``<Student Solution>``. Only the Context and Action wording varies with the
teacher-selected match policy:

* close: the student solution must cover all answer elements,
* partial: it must cover at least ``n`` of them,
* flexible: the model answer is only an example; the gist must be maintained.

Templates live in external text assets with ``{{name}}`` placeholders so
course staff can reword or localize them; the packaged English assets are the
defaults.
"""

import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from enum import Enum
from importlib import resources
from pathlib import Path

from .exercise_format import format_points

__all__ = [
    "MatchMode",
    "MatchPolicy",
    "ModelSolutionEntry",
    "GradingTask",
    "SolutionRegistry",
    "PromptLibrary",
    "render_prompt",
    "load_solution_registry",
    "RegistryError",
    "RegistryFormatError",
    "DuplicateSolutionKey",
    "MissingField",
    "InvalidPolicy",
    "InvalidFieldValue",
    "UnknownPlaceholder",
]


class RegistryError(Exception):
    """Base class for model-solution registry problems."""


class RegistryFormatError(RegistryError):
    pass


class DuplicateSolutionKey(RegistryError):
    def __init__(self, exercise_id: int, answer_id: str):
        super().__init__(f"duplicate solution entry for exercise {exercise_id}, answer {answer_id!r}")
        self.exercise_id = exercise_id
        self.answer_id = answer_id


class MissingField(RegistryError):
    def __init__(self, field: str):
        super().__init__(f"registry entry is missing required field {field!r}")
        self.field = field


class InvalidPolicy(RegistryError):
    def __init__(self, raw: str):
        super().__init__(f"unknown match mode {raw!r} (expected close, partial or flexible)")
        self.raw = raw


class InvalidFieldValue(RegistryError):
    def __init__(self, field: str, raw: str, reason: str):
        super().__init__(f"bad value {raw!r} for field {field!r}: {reason}")
        self.field = field
        self.raw = raw


class UnknownPlaceholder(Exception):
    def __init__(self, name: str):
        super().__init__(f"template references unknown placeholder {{{{{name}}}}}")
        self.name = name


class MatchMode(Enum):
    CLOSE = "close"
    PARTIAL = "partial"
    FLEXIBLE = "flexible"


@dataclass(frozen=True)
class MatchPolicy:
    """Strictness of comparison against the model solution.

    ``n`` is the minimum number of answer elements to cover and is required
    exactly when mode is partial.
    """

    mode: MatchMode
    n: int | None = None

    def __post_init__(self) -> None:
        if self.mode is MatchMode.PARTIAL:
            if self.n is None:
                raise MissingField("n")
            if self.n < 1:
                raise InvalidFieldValue("n", str(self.n), "must be a positive integer")
        elif self.n is not None:
            raise InvalidFieldValue("n", str(self.n), f"not allowed for mode {self.mode.value}")


@dataclass(frozen=True)
class ModelSolutionEntry:
    exercise_id: int
    answer_id: str
    model_answer: str
    policy: MatchPolicy
    max_points: float


@dataclass(frozen=True)
class GradingTask:
    """Inputs for one rendered grading prompt."""

    question_text: str
    model_answer: str
    student_answer: str
    max_points: float
    policy: MatchPolicy

    def __post_init__(self) -> None:
        if self.max_points <= 0:
            raise ValueError("max_points must be positive")


_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")

_TEMPLATE_FILES = {
    MatchMode.CLOSE: "close_match.txt",
    MatchMode.PARTIAL: "partial_match.txt",
    MatchMode.FLEXIBLE: "flexible_match.txt",
}

_SECTION_ORDER = (
    "<Role>",
    "<Context>",
    "<Action>",
    "<Output>",
    "<Question>",
    "<Model Answer>",
    "<Student Solution>",
)


class PromptLibrary:
    """One template per match mode, validated for section structure."""

    def __init__(self, templates: dict[MatchMode, str]):
        for mode in MatchMode:
            if mode not in templates:
                raise ValueError(f"no template for mode {mode.value!r}")
        for mode, text in templates.items():
            cursor = 0
            for section in _SECTION_ORDER:
                index = text.find(section, cursor)
                if index < 0:
                    raise ValueError(f"{mode.value} template lacks section {section} in order")
                cursor = index + len(section)
        self._templates = dict(templates)

    @classmethod
    def packaged(cls) -> "PromptLibrary":
        """Load the English template assets shipped with the package."""
        base = resources.files(__package__).joinpath("templates")
        return cls(
            {mode: base.joinpath(name).read_text(encoding="utf-8") for mode, name in _TEMPLATE_FILES.items()}
        )

    @classmethod
    def from_directory(cls, directory: str | Path) -> "PromptLibrary":
        base = Path(directory)
        return cls(
            {mode: (base / name).read_text(encoding="utf-8") for mode, name in _TEMPLATE_FILES.items()}
        )

    def render(self, task: GradingTask) -> str:
        values = {
            "question": task.question_text,
            "model_answer": task.model_answer,
            "student_answer": task.student_answer,
            "max_points": format_points(task.max_points),
            "n": "" if task.policy.n is None else str(task.policy.n),
        }

        def substitute(match: re.Match) -> str:
            name = match.group(1)
            if name not in values:
                raise UnknownPlaceholder(name)
            return values[name]

        # Single-pass substitution: placeholder syntax inside student text is
        # never re-expanded.
        return _PLACEHOLDER_RE.sub(substitute, self._templates[task.policy.mode])


_DEFAULT_LIBRARY: PromptLibrary | None = None


def _default_library() -> PromptLibrary:
    global _DEFAULT_LIBRARY
    if _DEFAULT_LIBRARY is None:
        _DEFAULT_LIBRARY = PromptLibrary.packaged()
    return _DEFAULT_LIBRARY


def render_prompt(task: GradingTask, library: PromptLibrary | None = None) -> str:
    """Render the grading prompt for one task. Pure and deterministic."""
    return (library or _default_library()).render(task)


class SolutionRegistry:
    """Immutable lookup of model solutions keyed by (exercise_id, answer_id)."""

    def __init__(self, entries: list[ModelSolutionEntry]):
        self._by_key: dict[tuple[int, str], ModelSolutionEntry] = {}
        for entry in entries:
            key = (entry.exercise_id, entry.answer_id)
            if key in self._by_key:
                raise DuplicateSolutionKey(*key)
            self._by_key[key] = entry

    def __len__(self) -> int:
        return len(self._by_key)

    def __iter__(self):
        return iter(self._by_key.values())

    def get(self, exercise_id: int, answer_id: str) -> ModelSolutionEntry | None:
        return self._by_key.get((exercise_id, answer_id))

    def for_exercise(self, exercise_id: int) -> list[ModelSolutionEntry]:
        return [e for e in self._by_key.values() if e.exercise_id == exercise_id]


_MODE_NAMES = {
    "close": MatchMode.CLOSE,
    "partial": MatchMode.PARTIAL,
    "flexible": MatchMode.FLEXIBLE,
}

_SCALAR_FIELDS = {"exercise_id", "answer_id", "max_points", "mode", "n"}


def _build_entry(fields: dict[str, str], answer_lines: list[str] | None) -> ModelSolutionEntry:
    for required in ("exercise_id", "answer_id", "max_points", "mode"):
        if required not in fields:
            raise MissingField(required)
    if answer_lines is None:
        raise MissingField("model_answer")

    raw_mode = fields["mode"].strip().lower()
    if raw_mode not in _MODE_NAMES:
        raise InvalidPolicy(fields["mode"].strip())
    mode = _MODE_NAMES[raw_mode]

    n: int | None = None
    if "n" in fields:
        try:
            n = int(fields["n"])
        except ValueError:
            raise InvalidFieldValue("n", fields["n"], "not an integer") from None
    policy = MatchPolicy(mode=mode, n=n)

    try:
        exercise_id = int(fields["exercise_id"])
    except ValueError:
        raise InvalidFieldValue("exercise_id", fields["exercise_id"], "not an integer") from None
    if exercise_id < 1:
        raise InvalidFieldValue("exercise_id", fields["exercise_id"], "must be positive")

    try:
        max_points = Decimal(fields["max_points"])
    except InvalidOperation:
        raise InvalidFieldValue("max_points", fields["max_points"], "not a number") from None
    if max_points <= 0 or (max_points * 2) != (max_points * 2).to_integral_value():
        raise InvalidFieldValue("max_points", fields["max_points"], "must be a positive multiple of 0.5")

    answer_id = fields["answer_id"].strip()
    if not answer_id or any(c.isspace() for c in answer_id) or "#" in answer_id:
        raise InvalidFieldValue("answer_id", fields["answer_id"], "must be non-empty without whitespace or '#'")

    return ModelSolutionEntry(
        exercise_id=exercise_id,
        answer_id=answer_id,
        model_answer="\n".join(answer_lines).strip(),
        policy=policy,
        max_points=float(max_points),
    )


def load_solution_registry(source: str) -> SolutionRegistry:
    """Parse the registry file format into a SolutionRegistry.

    One record per entry, records separated by a line of three dashes.
    Scalar fields are ``key: value`` lines; the model answer is every line
    after a ``model_answer:`` line up to the record separator. ``#`` comment
    lines are allowed outside the model answer. Example::

        exercise_id: 8
        answer_id: 8.1a
        max_points: 4
        mode: partial
        n: 2
        model_answer:
        Code review finds 2.0 defects per hour, testing 1.5.
        Prefer code review under a short deadline.
        ---

    Raises:
        DuplicateSolutionKey: two records share (exercise_id, answer_id).
        MissingField: a required field is absent.
        InvalidPolicy: mode is not close, partial or flexible.
        InvalidFieldValue: a field fails validation (bad number, bad id, n
            present for a non-partial mode, n missing for partial).
        RegistryFormatError: a line fits no rule.
    """
    entries: list[ModelSolutionEntry] = []
    fields: dict[str, str] = {}
    answer_lines: list[str] | None = None
    saw_content = False

    def close_record() -> None:
        nonlocal fields, answer_lines, saw_content
        if saw_content:
            entries.append(_build_entry(fields, answer_lines))
        fields = {}
        answer_lines = None
        saw_content = False

    for line_no, line in enumerate(source.splitlines(), start=1):
        if answer_lines is not None:
            if line.strip() == "---":
                close_record()
            else:
                answer_lines.append(line)
            continue
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped == "---":
            close_record()
            continue
        if stripped == "model_answer:":
            answer_lines = []
            saw_content = True
            continue
        key, sep, value = line.partition(":")
        key = key.strip()
        if sep and key in _SCALAR_FIELDS:
            if key in fields:
                raise RegistryFormatError(f"line {line_no}: field {key!r} repeated within a record")
            fields[key] = value.strip()
            saw_content = True
            continue
        raise RegistryFormatError(f"line {line_no}: cannot interpret {stripped!r}")
    close_record()

    return SolutionRegistry(entries)
