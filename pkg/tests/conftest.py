"""Shared fixtures and oracles: ODT builders, scripted gateways, OLS solver."""

import io
import math
import zipfile
from xml.sax.saxutils import escape

import pytest

from autofeedback.llm_gateway import LLMGateway, MockProvider
from autofeedback.prompt_engine import load_solution_registry

TEXT_NS = "urn:oasis:names:tc:opendocument:xmlns:text:1.0"
OFFICE_NS = "urn:oasis:names:tc:opendocument:xmlns:office:1.0"


def make_odt(lines, mimetype_first=True) -> bytes:
    """Build a minimal ODT container whose paragraphs are the given lines."""
    paragraphs = "".join(f"<text:p>{escape(line)}</text:p>" for line in lines)
    content = (
        '<?xml version="1.0" encoding="UTF-8"?>'
        f'<office:document-content xmlns:office="{OFFICE_NS}" xmlns:text="{TEXT_NS}">'
        f"<office:body><office:text>{paragraphs}</office:text></office:body>"
        "</office:document-content>"
    )
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w") as archive:
        if mimetype_first:
            info = zipfile.ZipInfo("mimetype")
            info.compress_type = zipfile.ZIP_STORED
            archive.writestr(info, "application/vnd.oasis.opendocument.text")
        archive.writestr("content.xml", content)
        archive.writestr("styles.xml", "<styles/>")
    return buffer.getvalue()


EXAMPLE_QUESTION_LINES = [
    "Question 8.1a) The following two quality assurance techniques are available in a "
    "software project: code review, which finds 10 defects in 5 person hours; automated "
    "unit test and debugging, which finds 15 defects in 10 person hours. Explain which "
    "of the two techniques you would use in a project with an extremely short deadline.",
    "## Answer 8.1a Start ##  POINTS: 4 ##",
    "<your answer here>",
    "## Answer 8.1a End ##",
]

EXAMPLE_REGISTRY = """\
exercise_id: 8
answer_id: 8.1a
max_points: 4
mode: close
model_answer:
While testing and debugging is more effective (15 vs 10 defects), one should use
code review, because it has a higher efficiency (2.0 vs 1.5 defects per hour).
---
"""


@pytest.fixture
def example_document() -> bytes:
    return make_odt(EXAMPLE_QUESTION_LINES)


@pytest.fixture
def example_registry():
    return load_solution_registry(EXAMPLE_REGISTRY)


@pytest.fixture
def mock_gateway_factory():
    """Gateways over a MockProvider with no real backoff sleeps."""

    def build(default=None, responses=None, fail_times=0, retry_limit=3, **provider_kwargs):
        provider = MockProvider(
            responses=responses, default=default, fail_times=fail_times, **provider_kwargs
        )
        gateway = LLMGateway(provider, retry_limit=retry_limit, sleep=lambda _: None)
        return gateway, provider

    return build


def solve_linear_system(matrix, rhs):
    """Gauss-Jordan elimination with partial pivoting, plain Python."""
    n = len(matrix)
    aug = [list(row) + [rhs[i]] for i, row in enumerate(matrix)]
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(aug[r][col]))
        if abs(aug[pivot][col]) < 1e-12:
            raise ValueError("singular system")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        scale = aug[col][col]
        aug[col] = [v / scale for v in aug[col]]
        for row in range(n):
            if row != col and aug[row][col] != 0.0:
                factor = aug[row][col]
                aug[row] = [v - factor * p for v, p in zip(aug[row], aug[col])]
    return [aug[i][n] for i in range(n)]


def ols_oracle(design, y):
    """Normal-equations least squares, independent of the fitted module.

    ``design`` is a list of row lists (intercept column included). Returns
    (beta, std_errors, df_resid) under the classic residual-variance model.
    """
    n = len(design)
    p = len(design[0])
    xtx = [[sum(row[a] * row[b] for row in design) for b in range(p)] for a in range(p)]
    xty = [sum(design[i][a] * y[i] for i in range(n)) for a in range(p)]
    beta = solve_linear_system(xtx, xty)
    residuals = [y[i] - sum(design[i][a] * beta[a] for a in range(p)) for i in range(n)]
    df_resid = n - p
    sigma2 = sum(r * r for r in residuals) / df_resid
    std_errors = []
    for j in range(p):
        unit = [1.0 if k == j else 0.0 for k in range(p)]
        column = solve_linear_system(xtx, unit)
        std_errors.append(math.sqrt(sigma2 * column[j]))
    return beta, std_errors, df_resid
