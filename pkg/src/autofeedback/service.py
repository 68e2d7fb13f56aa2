"""HTTP surface: registration-checked upload, grading, download, purge, health.

Endpoints:

* ``POST /submissions`` (multipart email, exercise_id, document) grades the
  upload and opens a session; 403 when not registered, 422 with block detail
  on marker or registry problems, 502 when the provider is down.
* ``GET /submissions/{id}/status`` is the polling payload: status plus the
  score summary once ready.
* ``GET /submissions/{id}/feedback?token=`` streams the merged document once
  (single-use token) and drops the stored bytes.
* ``DELETE /sessions/{id}`` purges the session; log rows stay.
* ``GET /health`` reports provider reachability without grading anything.
"""

import threading

from fastapi import FastAPI, File, Form, UploadFile
from fastapi.responses import JSONResponse, Response

from .exercise_format import ExerciseFormatError
from .llm_gateway import GatewayError, LLMGateway
from .orchestrator import GradingError, SubmissionResult, grade_submission
from .privacy import (
    InvalidEmailSyntax,
    NotRegistered,
    SessionStore,
    StudentRegistry,
    UnknownSession,
    check_registration,
)
from .prompt_engine import PromptLibrary, SolutionRegistry
from .usage_log import UsageLog

__all__ = ["create_app"]

ODT_MEDIA_TYPE = "application/vnd.oasis.opendocument.text"


def _error_payload(exc: Exception) -> dict:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    answer_id = getattr(exc, "answer_id", None)
    if answer_id is not None:
        payload["answer_id"] = answer_id
    return payload


def _score_payload(result: SubmissionResult) -> dict:
    return {
        "exercise_id": result.exercise_id,
        "total_awarded": result.total_awarded,
        "total_max": result.total_max,
        "score_percent": result.score_percent,
        "per_block": [
            {
                "answer_id": a.answer_id,
                "awarded_points": a.awarded_points,
                "max_points": a.max_points,
                "attempts": a.attempts,
                **({"ungraded_reason": a.ungraded_reason} if a.ungraded_reason else {}),
            }
            for a in result.answers
        ],
    }


def create_app(
    solutions: SolutionRegistry,
    students: StudentRegistry,
    gateway: LLMGateway,
    usage_log: UsageLog,
    *,
    store: SessionStore | None = None,
    prompt_library: PromptLibrary | None = None,
    upload_cap: int = 5 * 1024 * 1024,
    grade_in_background: bool = False,
) -> FastAPI:
    app = FastAPI(title="autofeedback", docs_url=None, redoc_url=None)
    sessions = store if store is not None else SessionStore()
    app.state.sessions = sessions

    def run_grading(session_id: str, data: bytes, exercise_id: int, email: str, pseudonym: str) -> None:
        state = sessions.get(session_id)
        try:
            result = grade_submission(
                data,
                exercise_id,
                solutions,
                gateway,
                identity_strings=students.identity_strings(email),
                prompt_library=prompt_library,
                usage_log=usage_log,
                pseudonym=pseudonym,
            )
        except (ExerciseFormatError, GradingError, GatewayError, ValueError) as exc:
            state.status = "failed"
            state.error_detail = _error_payload(exc)
            state.submission_bytes = None
            return
        state.result = result
        state.merged_bytes = result.merged_document
        state.submission_bytes = None
        state.status = "ready"

    @app.post("/submissions")
    def post_submission(
        email: str = Form(...),
        exercise_id: int = Form(...),
        document: UploadFile = File(...),
    ):
        data = document.file.read()
        if len(data) > upload_cap:
            return JSONResponse(
                status_code=413,
                content={"error": "UploadTooLarge", "message": f"document exceeds {upload_cap} bytes"},
            )
        try:
            pseudonym = check_registration(email, students)
        except InvalidEmailSyntax as exc:
            return JSONResponse(status_code=422, content=_error_payload(exc))
        except NotRegistered as exc:
            return JSONResponse(status_code=403, content=_error_payload(exc))

        state = sessions.create(pseudonym, submission_bytes=data)
        base = {"session_id": state.session_id, "download_token": state.download_token}

        if grade_in_background:
            worker = threading.Thread(
                target=run_grading,
                args=(state.session_id, data, exercise_id, email, pseudonym),
                daemon=True,
            )
            worker.start()
            return JSONResponse(status_code=202, content={**base, "status": "grading"})

        run_grading(state.session_id, data, exercise_id, email, pseudonym)
        if state.status == "failed":
            detail = state.error_detail or {}
            status_code = 502 if detail.get("error") in ("ProviderUnavailable", "Timeout", "QuotaExceeded") else 422
            return JSONResponse(status_code=status_code, content={**base, **detail})
        return JSONResponse(
            status_code=200,
            content={**base, "status": "ready", "score": _score_payload(state.result)},
        )

    @app.get("/submissions/{session_id}/status")
    def get_status(session_id: str):
        try:
            state = sessions.get(session_id)
        except UnknownSession as exc:
            return JSONResponse(status_code=404, content=_error_payload(exc))
        payload = {"session_id": session_id, "status": state.status}
        if state.status == "ready" and state.result is not None:
            payload["score"] = _score_payload(state.result)
            payload["download_available"] = not state.download_token_used
        if state.status == "failed":
            payload["error"] = state.error_detail
        return payload

    @app.get("/submissions/{session_id}/feedback")
    def get_feedback(session_id: str, token: str = ""):
        try:
            payload = sessions.consume_download(session_id, token)
        except UnknownSession as exc:
            return JSONResponse(status_code=404, content=_error_payload(exc))
        except PermissionError as exc:
            return JSONResponse(status_code=403, content={"error": "DownloadTokenRejected", "message": str(exc)})
        except LookupError:
            return JSONResponse(
                status_code=409,
                content={"error": "NotReady", "message": "grading has not produced a document for this session"},
            )
        return Response(
            content=payload,
            media_type=ODT_MEDIA_TYPE,
            headers={"Content-Disposition": 'attachment; filename="feedback.odt"'},
        )

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        try:
            sessions.purge(session_id)
        except UnknownSession as exc:
            return JSONResponse(status_code=404, content=_error_payload(exc))
        return {"purged": True, "session_id": session_id}

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "provider_id": gateway.provider.provider_id,
            "provider_reachable": gateway.provider.ping(),
        }

    return app
