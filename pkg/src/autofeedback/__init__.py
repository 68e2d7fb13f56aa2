"""Self-hostable grading service for marker-delimited exercise documents.

Parses answer blocks out of uploaded ODT files, grades each block with a
policy-specific LLM prompt against teacher model solutions, merges the
feedback back into the document, and logs pseudonymized usage. The
analytics subpackage reproduces the engagement metrics (NUC, NUR, RLG),
survey aggregation, regression, and rank-test machinery used to study the
service's effect.
"""

__version__ = "0.1.0"

from .exercise_format import AnswerBlock, ExercisePaper, extract_blocks, merge_feedback, parse_odt
from .llm_gateway import LLMGateway, MockProvider, parse_points
from .orchestrator import SubmissionResult, grade_submission
from .prompt_engine import GradingTask, MatchMode, MatchPolicy, load_solution_registry, render_prompt

__all__ = [
    "__version__",
    "AnswerBlock",
    "ExercisePaper",
    "extract_blocks",
    "merge_feedback",
    "parse_odt",
    "LLMGateway",
    "MockProvider",
    "parse_points",
    "SubmissionResult",
    "grade_submission",
    "GradingTask",
    "MatchMode",
    "MatchPolicy",
    "load_solution_registry",
    "render_prompt",
]
