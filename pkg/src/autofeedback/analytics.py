"""Engagement metrics, survey aggregation, regression, and group comparison.

Covers the quantitative machinery around the grading service:

* relative learning gain per resubmitted exercise,
  RLG = (final - initial) / (100 - initial);
* per-student engagement summaries: NUC (mean initial score over exercises
  submitted exactly once) and NUR (mean RLG over resubmitted exercises);
* Likert dimension summaries with half-up integer mapping;
* ordinary least squares for SP ~ BA + WE + EM + NUC + NUR with standard
  errors, t statistics, two-sided p values, and 95% confidence intervals;
* Kruskal-Wallis rank test with tie correction, exact permutation p value
  for small samples and the chi-square approximation otherwise;
* a plain-text report renderer.
"""

import csv
import io
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .distributions import chi2_sf, t_ppf, t_two_sided_p

__all__ = [
    "EngagementSummary",
    "StudyRow",
    "RegressionFit",
    "LikertDimension",
    "KruskalWallisResult",
    "ParsedStudy",
    "relative_learning_gain",
    "engagement_summaries",
    "likert_summary",
    "fit_ols",
    "kruskal_wallis",
    "emit_report",
    "parse_study_file",
    "merge_engagement",
    "AnalyticsError",
    "Ineligible",
    "EmptyDimension",
    "InsufficientRows",
    "SingularDesign",
    "DegenerateGroups",
    "StudyFileError",
]

REGRESSOR_NAMES = ("Intercept", "BA", "WE", "EM", "NUC", "NUR")


class AnalyticsError(Exception):
    pass


class Ineligible(AnalyticsError):
    """Initial score of 100 leaves no headroom; RLG is undefined."""

    def __init__(self) -> None:
        super().__init__("relative learning gain undefined for initial score 100")
        self.initial = 100.0


class EmptyDimension(AnalyticsError):
    pass


class InsufficientRows(AnalyticsError):
    def __init__(self, n_used: int, required: int):
        super().__init__(f"{n_used} complete rows, need at least {required}")
        self.n_used = n_used


class SingularDesign(AnalyticsError):
    def __init__(self, rank: int):
        super().__init__(f"design matrix rank {rank} < 6; a regressor is collinear or constant")
        self.rank = rank


class DegenerateGroups(AnalyticsError):
    pass


class StudyFileError(AnalyticsError):
    pass


def relative_learning_gain(initial: float, final: float) -> float:
    """RLG = (final - initial) / (100 - initial), both scores in percent.

    Raises:
        Ineligible: initial is 100 (no potential growth to capture).
        ValueError: a score is outside [0, 100].
    """
    if not 0 <= initial <= 100 or not 0 <= final <= 100:
        raise ValueError("scores must lie in [0, 100]")
    if initial == 100:
        raise Ineligible()
    return (final - initial) / (100.0 - initial)


@dataclass(frozen=True)
class EngagementSummary:
    """Per-student split into confirmed (E1) and remedied (E1plus) exercises."""

    pseudonym: str
    E1: frozenset
    E1plus: frozenset
    NUC: float | None
    NUR: float | None
    excluded: tuple = ()

    def __post_init__(self) -> None:
        if self.E1 & self.E1plus:
            raise ValueError("an exercise cannot be both single- and multi-submission")
        if self.NUC is not None and not 0 <= self.NUC <= 100:
            raise ValueError(f"NUC {self.NUC} outside [0, 100]")


def engagement_summaries(grouped: dict) -> list[EngagementSummary]:
    """Summarize usage_log.submissions_by_student output per student.

    NUC is the mean initial (= only) score over single-submission exercises.
    NUR is the mean RLG over multi-submission exercises, computed from the
    first and last score; exercises whose first score is already 100 are
    excluded from NUR and recorded in ``excluded``.
    """
    out = []
    for pseudonym in sorted(grouped):
        scores_by_exercise = grouped[pseudonym]
        e1 = frozenset(ex for ex, scores in scores_by_exercise.items() if len(scores) == 1)
        e1plus = frozenset(ex for ex, scores in scores_by_exercise.items() if len(scores) > 1)
        nuc = None
        if e1:
            nuc = sum(scores_by_exercise[ex][0] for ex in e1) / len(e1)
        gains = []
        excluded = []
        for ex in sorted(e1plus):
            scores = scores_by_exercise[ex]
            try:
                gains.append(relative_learning_gain(scores[0], scores[-1]))
            except Ineligible:
                excluded.append(ex)
        nur = sum(gains) / len(gains) if gains else None
        out.append(
            EngagementSummary(
                pseudonym=pseudonym,
                E1=e1,
                E1plus=e1plus,
                NUC=nuc,
                NUR=nur,
                excluded=tuple(excluded),
            )
        )
    return out


@dataclass(frozen=True)
class LikertDimension:
    name: str
    n_items: int
    mean: float
    mapped_point: int


def likert_summary(name: str, responses) -> LikertDimension:
    """Mean of all item responses in a dimension, mapped to the nearest
    scale point with half-up tie breaking (3.5 maps to 4).

    ``responses`` is either a flat iterable of integers 1..5 or an iterable
    of per-respondent lists.

    Raises:
        EmptyDimension: no responses at all.
        ValueError: a response is outside the 1..5 scale.
    """
    items: list[int] = []
    for entry in responses:
        if isinstance(entry, (list, tuple)):
            items.extend(entry)
        else:
            items.append(entry)
    if not items:
        raise EmptyDimension(f"dimension {name!r} has no responses")
    for item in items:
        if not isinstance(item, int) or isinstance(item, bool) or not 1 <= item <= 5:
            raise ValueError(f"Likert response {item!r} outside the 1..5 scale")
    mean = Fraction(sum(items), len(items))
    mapped = int(mean + Fraction(1, 2))  # floor, values are positive
    return LikertDimension(name=name, n_items=len(items), mean=float(mean), mapped_point=mapped)


@dataclass(frozen=True)
class StudyRow:
    """One student's regression tuple; None marks a missing value."""

    pseudonym: str
    SP: float | None
    BA: float | None
    WE: int | None
    EM: int | None
    NUC: float | None = None
    NUR: float | None = None

    def __post_init__(self) -> None:
        if self.SP is not None and not 0 <= self.SP <= 100:
            raise ValueError(f"SP {self.SP} outside [0, 100]")
        if self.BA is not None and not 0 <= self.BA <= 1:
            raise ValueError(f"BA {self.BA} outside [0, 1]")
        for field_name in ("WE", "EM"):
            value = getattr(self, field_name)
            if value is not None and value not in (0, 1, 2, 3):
                raise ValueError(f"{field_name} {value!r} not an ordinal level 0..3")
        if self.NUC is not None and not 0 <= self.NUC <= 100:
            raise ValueError(f"NUC {self.NUC} outside [0, 100]")

    def is_complete(self) -> bool:
        values = (self.SP, self.BA, self.WE, self.EM, self.NUC, self.NUR)
        return all(v is not None and not (isinstance(v, float) and math.isnan(v)) for v in values)


@dataclass(frozen=True)
class RegressionFit:
    terms: tuple
    estimates: tuple
    std_errors: tuple
    t_values: tuple
    p_values: tuple
    ci_low: tuple
    ci_high: tuple
    n_used: int
    df_resid: int


def fit_ols(rows, *, nuc_scale: float = 0.01, standardize: bool = False) -> RegressionFit:
    """Complete-case OLS of SP on [1, BA, WE, EM, NUC*nuc_scale, NUR].

    Rows with any missing value among the six variables are dropped. NUC
    enters as a fraction of 100 by default (nuc_scale 0.01); set
    ``standardize=True`` to z-score all regressors instead.

    Inference: residual-variance covariance, two-sided p values from the t
    distribution with df = n_used - 6, and 95% confidence intervals at
    t_crit(df, 0.975).

    Raises:
        InsufficientRows: fewer than 8 complete rows.
        SingularDesign: design matrix rank below 6.
    """
    complete = [r for r in rows if r.is_complete()]
    n_used = len(complete)
    if n_used < 8:
        raise InsufficientRows(n_used, 8)

    y = np.array([r.SP for r in complete], dtype=float)
    design = np.column_stack(
        [
            np.ones(n_used),
            np.array([r.BA for r in complete], dtype=float),
            np.array([r.WE for r in complete], dtype=float),
            np.array([r.EM for r in complete], dtype=float),
            np.array([r.NUC for r in complete], dtype=float) * nuc_scale,
            np.array([r.NUR for r in complete], dtype=float),
        ]
    )
    if standardize:
        for j in range(1, design.shape[1]):
            spread = design[:, j].std(ddof=0)
            if spread > 0:
                design[:, j] = (design[:, j] - design[:, j].mean()) / spread

    rank = np.linalg.matrix_rank(design)
    if rank < design.shape[1]:
        raise SingularDesign(int(rank))

    beta, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    residuals = y - design @ beta
    df_resid = n_used - design.shape[1]
    sigma2 = float(residuals @ residuals) / df_resid
    covariance = sigma2 * np.linalg.inv(design.T @ design)
    std_errors = np.sqrt(np.diag(covariance))

    t_values = []
    p_values = []
    for estimate, stderr in zip(beta, std_errors):
        if stderr == 0.0:
            t_values.append(math.inf if estimate >= 0 else -math.inf)
            p_values.append(0.0)
        else:
            t = float(estimate / stderr)
            t_values.append(t)
            p_values.append(t_two_sided_p(t, df_resid))
    t_crit = t_ppf(0.975, df_resid)

    return RegressionFit(
        terms=REGRESSOR_NAMES,
        estimates=tuple(float(b) for b in beta),
        std_errors=tuple(float(s) for s in std_errors),
        t_values=tuple(t_values),
        p_values=tuple(p_values),
        ci_low=tuple(float(b - t_crit * s) for b, s in zip(beta, std_errors)),
        ci_high=tuple(float(b + t_crit * s) for b, s in zip(beta, std_errors)),
        n_used=n_used,
        df_resid=df_resid,
    )


@dataclass(frozen=True)
class KruskalWallisResult:
    H: float
    p_value: float
    method: str
    group_sizes: tuple


def _average_ranks(pooled: list[float]) -> list[float]:
    n = len(pooled)
    order = sorted(range(n), key=lambda i: pooled[i])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        average = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = average
        i = j + 1
    return ranks


def _h_from_rank_sums(rank_sums, sizes, n_total: int, tie_correction: float) -> float:
    h = 12.0 / (n_total * (n_total + 1)) * sum(
        rs * rs / size for rs, size in zip(rank_sums, sizes)
    ) - 3.0 * (n_total + 1)
    return h / tie_correction


def kruskal_wallis(groups, method: str = "auto", exact_limit: int = 10) -> KruskalWallisResult:
    """Kruskal-Wallis H test across score groups, with tie correction.

    For ``method="auto"`` the p value is exact (full enumeration of the
    permutation distribution) when the pooled sample size is at most
    ``exact_limit``, and the chi-square approximation with k-1 degrees of
    freedom otherwise. ``method`` may pin either branch explicitly
    ("permutation" or "chi-square").

    Raises:
        DegenerateGroups: fewer than 2 groups, an empty group, pooled size
            below 5, or all observations identical.
    """
    data = [[float(v) for v in g] for g in groups]
    if len(data) < 2 or any(not g for g in data):
        raise DegenerateGroups("need at least 2 non-empty groups")
    sizes = tuple(len(g) for g in data)
    n_total = sum(sizes)
    if n_total < 5:
        raise DegenerateGroups(f"pooled sample size {n_total} below 5")
    pooled = [v for g in data for v in g]
    if len(set(pooled)) == 1:
        raise DegenerateGroups("all observations are identical")

    ranks = _average_ranks(pooled)
    tie_counts: dict[float, int] = {}
    for v in pooled:
        tie_counts[v] = tie_counts.get(v, 0) + 1
    tie_correction = 1.0 - sum(t**3 - t for t in tie_counts.values()) / (n_total**3 - n_total)

    offsets = [0]
    for size in sizes:
        offsets.append(offsets[-1] + size)
    observed_sums = [sum(ranks[offsets[i]:offsets[i + 1]]) for i in range(len(sizes))]
    h_observed = _h_from_rank_sums(observed_sums, sizes, n_total, tie_correction)

    if method not in ("auto", "permutation", "chi-square"):
        raise ValueError(f"unknown method {method!r}")
    use_exact = method == "permutation" or (method == "auto" and n_total <= exact_limit)

    if use_exact:
        at_least = 0
        total = 0
        threshold = h_observed - 1e-9
        for assignment_sums in _partition_rank_sums(ranks, sizes):
            total += 1
            if _h_from_rank_sums(assignment_sums, sizes, n_total, tie_correction) >= threshold:
                at_least += 1
        return KruskalWallisResult(
            H=h_observed, p_value=at_least / total, method="permutation", group_sizes=sizes
        )
    p = chi2_sf(h_observed, len(sizes) - 1)
    return KruskalWallisResult(H=h_observed, p_value=p, method="chi-square", group_sizes=sizes)


def _partition_rank_sums(ranks: list[float], sizes):
    """Yield group rank-sum tuples for every assignment of indices to groups."""
    indices = tuple(range(len(ranks)))

    def recurse(remaining: tuple, size_index: int, sums: tuple):
        if size_index == len(sizes) - 1:
            yield sums + (sum(ranks[i] for i in remaining),)
            return
        for chosen in itertools.combinations(remaining, sizes[size_index]):
            chosen_set = set(chosen)
            rest = tuple(i for i in remaining if i not in chosen_set)
            yield from recurse(rest, size_index + 1, sums + (sum(ranks[i] for i in chosen),))

    yield from recurse(indices, 0, ())


@dataclass(frozen=True)
class ParsedStudy:
    rows: list
    groups: dict


_STUDY_REQUIRED = ("pseudonym", "SP", "BA", "WE", "EM")
_STUDY_OPTIONAL = ("NUC", "NUR", "group")


def parse_study_file(text: str) -> ParsedStudy:
    """Read the study CSV: header pseudonym,SP,BA,WE,EM[,NUC][,NUR][,group].

    Empty fields are missing values. The optional group column labels each
    student for the rank test.

    Raises:
        StudyFileError: missing header columns or an invalid value.
    """
    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames or []
    missing = [c for c in _STUDY_REQUIRED if c not in header]
    if missing:
        raise StudyFileError(f"study file lacks required columns: {', '.join(missing)}")
    unknown = [c for c in header if c not in _STUDY_REQUIRED + _STUDY_OPTIONAL]
    if unknown:
        raise StudyFileError(f"study file has unknown columns: {', '.join(unknown)}")

    rows = []
    groups = {}
    for line_no, raw in enumerate(reader, start=2):
        def parse(column: str, cast):
            value = (raw.get(column) or "").strip()
            if value == "":
                return None
            try:
                return cast(value)
            except ValueError:
                raise StudyFileError(f"line {line_no}: bad {column} value {value!r}") from None

        pseudonym = (raw.get("pseudonym") or "").strip()
        if not pseudonym:
            raise StudyFileError(f"line {line_no}: empty pseudonym")
        try:
            row = StudyRow(
                pseudonym=pseudonym,
                SP=parse("SP", float),
                BA=parse("BA", float),
                WE=parse("WE", int),
                EM=parse("EM", int),
                NUC=parse("NUC", float),
                NUR=parse("NUR", float),
            )
        except ValueError as exc:
            raise StudyFileError(f"line {line_no}: {exc}") from None
        rows.append(row)
        label = (raw.get("group") or "").strip()
        if label:
            groups[pseudonym] = label
    return ParsedStudy(rows=rows, groups=groups)


def merge_engagement(rows, summaries) -> list[StudyRow]:
    """Fill missing NUC/NUR in study rows from engagement summaries."""
    by_pseudonym = {s.pseudonym: s for s in summaries}
    merged = []
    for row in rows:
        summary = by_pseudonym.get(row.pseudonym)
        if summary is None:
            merged.append(row)
            continue
        merged.append(
            StudyRow(
                pseudonym=row.pseudonym,
                SP=row.SP,
                BA=row.BA,
                WE=row.WE,
                EM=row.EM,
                NUC=row.NUC if row.NUC is not None else summary.NUC,
                NUR=row.NUR if row.NUR is not None else summary.NUR,
            )
        )
    return merged


def _histogram(values, edges) -> list[tuple[str, int]]:
    bins = []
    for i in range(len(edges) - 1):
        low, high = edges[i], edges[i + 1]
        last = i == len(edges) - 2
        count = sum(1 for v in values if low <= v < high or (last and v == high))
        bracket = "]" if last else ")"
        bins.append((f"[{low:g}, {high:g}{bracket}", count))
    return bins


def emit_report(summaries, fit=None, kw=None, likert=None, notes=None) -> str:
    """Render the analytics report: regression table, NUC/NUR histograms,
    and Likert dimension summaries. Sections without inputs say so."""
    lines: list[str] = ["Engagement and study report", ""]

    lines.append("== Regression: SP ~ BA + WE + EM + NUC + NUR ==")
    if fit is None:
        lines.append("no data")
    else:
        lines.append(
            f"{'term':<10}{'estimate':>12}{'std error':>12}{'t value':>10}"
            f"{'p value':>10}{'ci low':>12}{'ci high':>12}"
        )
        for i, term in enumerate(fit.terms):
            lines.append(
                f"{term:<10}{fit.estimates[i]:>12.4f}{fit.std_errors[i]:>12.4f}"
                f"{fit.t_values[i]:>10.3f}{fit.p_values[i]:>10.4f}"
                f"{fit.ci_low[i]:>12.4f}{fit.ci_high[i]:>12.4f}"
            )
        lines.append(f"n_used={fit.n_used}, residual df={fit.df_resid}")
    lines.append("")

    lines.append("== Group comparison (Kruskal-Wallis) ==")
    if kw is None:
        lines.append("no data")
    else:
        lines.append(
            f"H={kw.H:.4f}, p={kw.p_value:.5f} ({kw.method}), group sizes={list(kw.group_sizes)}"
        )
    lines.append("")

    lines.append("== Engagement distributions ==")
    nuc_values = [s.NUC for s in summaries if s.NUC is not None]
    nur_values = [s.NUR for s in summaries if s.NUR is not None]
    lines.append(f"NUC (initial score on single-submission exercises), n={len(nuc_values)}:")
    if nuc_values:
        for label, count in _histogram(nuc_values, [10 * i for i in range(11)]):
            lines.append(f"  {label:<12}{count}")
    else:
        lines.append("  no data")
    lines.append(f"NUR (relative learning gain on resubmitted exercises), n={len(nur_values)}:")
    if nur_values:
        edges = [round(-1.0 + 0.25 * i, 2) for i in range(9)]
        for label, count in _histogram(nur_values, edges):
            lines.append(f"  {label:<16}{count}")
        outside = sum(1 for v in nur_values if v < -1.0 or v > 1.0)
        if outside:
            lines.append(f"  outside [-1, 1]: {outside}")
    else:
        lines.append("  no data")
    lines.append("")

    lines.append("== Survey dimensions ==")
    if likert:
        for dim in likert:
            lines.append(
                f"{dim.name}: n={dim.n_items}, mean={dim.mean:.2f}, scale point {dim.mapped_point}"
            )
    else:
        lines.append("no data")

    if notes:
        lines.append("")
        lines.append("== Notes ==")
        lines.extend(str(n) for n in notes)
    lines.append("")
    return "\n".join(lines)
