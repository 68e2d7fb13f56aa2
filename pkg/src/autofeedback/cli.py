"""Command line entry points: serve, grade, run-analytics, validate-registry."""

from pathlib import Path

import click

from . import analytics
from .config import ConfigError, build_gateway, build_prompt_library, build_registries, load_config
from .exercise_format import ExerciseFormatError, format_points
from .llm_gateway import GatewayError
from .orchestrator import GradingError, grade_submission
from .privacy import SessionStore
from .prompt_engine import RegistryError, load_solution_registry
from .service import create_app
from .usage_log import UsageLog, UsageLogError, read_records, submissions_by_student


@click.group()
def main():
    """Grading service for marker-delimited exercise documents, plus analytics."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="INI config file; AUTOFEEDBACK_* environment variables override it.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(config_path, host, port):
    """Run the HTTP service."""
    import uvicorn

    try:
        config = load_config(config_path)
        solutions, students = build_registries(config)
        gateway = build_gateway(config)
        library = build_prompt_library(config)
    except (ConfigError, RegistryError, OSError) as exc:
        raise click.ClickException(str(exc))
    app = create_app(
        solutions,
        students,
        gateway,
        UsageLog(config.usage_log_path),
        store=SessionStore(ttl_seconds=config.session_ttl),
        prompt_library=library,
        upload_cap=config.upload_cap,
        grade_in_background=config.grade_in_background,
    )
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.argument("exercise_id", type=int)
@click.argument("document", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--solutions", "solutions_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, help="Model-solution registry file.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Where to write the graded document (default: <document>.graded.odt).")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
def grade(exercise_id, document, solutions_path, out_path, config_path):
    """Grade one document offline and write the merged feedback file."""
    try:
        config = load_config(config_path)
        gateway = build_gateway(config)
        library = build_prompt_library(config)
        solutions = load_solution_registry(solutions_path.read_text(encoding="utf-8"))
        result = grade_submission(
            document.read_bytes(),
            exercise_id,
            solutions,
            gateway,
            prompt_library=library,
        )
    except (ConfigError, RegistryError, ExerciseFormatError, GradingError, GatewayError, OSError) as exc:
        raise click.ClickException(str(exc))
    target = out_path or document.with_suffix(".graded.odt")
    target.write_bytes(result.merged_document)
    for answer in result.answers:
        status = f"{format_points(answer.awarded_points)}/{format_points(answer.max_points)}"
        if answer.ungraded_reason:
            status += f" (not graded: {answer.ungraded_reason})"
        click.echo(f"  {answer.answer_id}: {status}")
    click.echo(
        f"total {format_points(result.total_awarded)}/{format_points(result.total_max)}"
        f" ({result.score_percent:.1f}%), written to {target}"
    )


def _load_likert(path: Path):
    import csv

    dimensions: dict[str, list[int]] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if not reader.fieldnames or {"dimension", "response"} - set(reader.fieldnames):
            raise click.ClickException(f"{path}: expected CSV columns dimension,response")
        for line_no, row in enumerate(reader, start=2):
            try:
                dimensions.setdefault(row["dimension"].strip(), []).append(int(row["response"]))
            except (TypeError, ValueError):
                raise click.ClickException(f"{path} line {line_no}: bad response value")
    try:
        return [analytics.likert_summary(name, items) for name, items in sorted(dimensions.items())]
    except (analytics.AnalyticsError, ValueError) as exc:
        raise click.ClickException(f"{path}: {exc}")


@main.command("run-analytics")
@click.argument("log_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("study_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--likert", "likert_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              default=None, help="CSV of survey responses (columns dimension,response).")
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path),
              default=Path("report.txt"), show_default=True)
def run_analytics(log_path, study_path, likert_path, out_path):
    """Build the engagement and study report from a usage log and study file."""
    notes = []
    try:
        records = read_records(log_path)
        summaries = analytics.engagement_summaries(submissions_by_student(records))
        parsed = analytics.parse_study_file(study_path.read_text(encoding="utf-8"))
    except (UsageLogError, analytics.StudyFileError, OSError) as exc:
        raise click.ClickException(str(exc))

    rows = analytics.merge_engagement(parsed.rows, summaries)
    fit = None
    try:
        fit = analytics.fit_ols(rows)
    except analytics.AnalyticsError as exc:
        notes.append(f"regression skipped: {exc}")

    kw = None
    if parsed.groups:
        sp_by_label: dict[str, list[float]] = {}
        for row in rows:
            label = parsed.groups.get(row.pseudonym)
            if label is not None and row.SP is not None:
                sp_by_label.setdefault(label, []).append(row.SP)
        try:
            kw = analytics.kruskal_wallis([sp_by_label[k] for k in sorted(sp_by_label)])
        except analytics.AnalyticsError as exc:
            notes.append(f"group comparison skipped: {exc}")

    likert = _load_likert(likert_path) if likert_path else None
    report = analytics.emit_report(summaries, fit, kw, likert, notes=notes or None)
    out_path.write_text(report, encoding="utf-8")
    click.echo(f"report written to {out_path}")


@main.command("validate-registry")
@click.argument("solutions", type=click.Path(exists=True, dir_okay=False, path_type=Path))
def validate_registry(solutions):
    """Parse a model-solution registry file and summarize its entries."""
    try:
        registry = load_solution_registry(solutions.read_text(encoding="utf-8"))
    except (RegistryError, OSError) as exc:
        raise click.ClickException(str(exc))
    per_exercise: dict[int, int] = {}
    for entry in registry:
        per_exercise[entry.exercise_id] = per_exercise.get(entry.exercise_id, 0) + 1
    click.echo(f"{len(registry)} entries across {len(per_exercise)} exercises")
    for exercise_id in sorted(per_exercise):
        click.echo(f"  exercise {exercise_id}: {per_exercise[exercise_id]} answers")


if __name__ == "__main__":
    main()
