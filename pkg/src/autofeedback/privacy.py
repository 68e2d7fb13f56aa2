"""Registration by e-mail, pseudonymization, identity scrubbing, session retention.

Students are identified to the service by e-mail. Before anything leaves the
service toward the LLM, known identity strings (name parts, e-mail, student
id) are replaced by ``[REDACTED]``, and analytics only ever see a keyed
one-way pseudonym of the address. Stored submission and feedback bytes live
in a session store that deletes them on download or purge and expires them
after a TTL.
"""

import hmac
import re
import secrets
import threading
import time
from dataclasses import dataclass

from .exercise_format import is_marker_line

__all__ = [
    "StudentRegistry",
    "load_student_registry",
    "check_registration",
    "scrub_submission",
    "SessionState",
    "SessionStore",
    "PrivacyError",
    "NotRegistered",
    "InvalidEmailSyntax",
    "UnknownSession",
    "RegistryFileError",
]

PSEUDONYM_LENGTH = 16
REDACTED = "[REDACTED]"

_EMAIL_RE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")


class PrivacyError(Exception):
    pass


class NotRegistered(PrivacyError):
    def __init__(self) -> None:
        super().__init__("e-mail address is not registered for the course")


class InvalidEmailSyntax(PrivacyError):
    def __init__(self, email: str):
        super().__init__(f"not a syntactically valid e-mail address: {email!r}")
        self.email = email


class UnknownSession(PrivacyError):
    def __init__(self, session_id: str):
        super().__init__(f"unknown session {session_id!r}")
        self.session_id = session_id


class RegistryFileError(PrivacyError):
    pass


def normalize_email(email: str) -> str:
    normalized = email.strip().lower()
    if not _EMAIL_RE.match(normalized):
        raise InvalidEmailSyntax(email)
    return normalized


class StudentRegistry:
    """Registered addresses, their identity strings, and the pseudonym salt."""

    def __init__(self, emails, identity_strings: dict[str, list[str]] | None = None, *, salt: bytes):
        if not salt:
            raise ValueError("pseudonym salt must be non-empty")
        self._salt = salt
        self._emails = {normalize_email(e) for e in emails}
        self._identities: dict[str, tuple[str, ...]] = {}
        for email, strings in (identity_strings or {}).items():
            key = normalize_email(email)
            if key not in self._emails:
                raise RegistryFileError(f"identity strings given for unregistered address {key!r}")
            self._identities[key] = tuple(s for s in (x.strip() for x in strings) if s)

    def __repr__(self) -> str:  # the salt stays out of logs and tracebacks
        return f"StudentRegistry({len(self._emails)} addresses)"

    def __len__(self) -> int:
        return len(self._emails)

    def is_registered(self, email: str) -> bool:
        return normalize_email(email) in self._emails

    def pseudonym(self, email: str) -> str:
        normalized = normalize_email(email)
        digest = hmac.new(self._salt, normalized.encode("utf-8"), "sha256")
        return digest.hexdigest()[:PSEUDONYM_LENGTH]

    def identity_strings(self, email: str) -> tuple[str, ...]:
        """The address itself plus any sidecar strings (names, student id)."""
        normalized = normalize_email(email)
        return (normalized,) + self._identities.get(normalized, ())


def load_student_registry(students_text: str, identities_text: str | None = None, *, salt: bytes) -> StudentRegistry:
    """Build a registry from the one-address-per-line file and its sidecar.

    The sidecar maps an address to identity strings separated by ``|``::

        max.mustermann@uni.example: Max Mustermann | Max | Mustermann | 0012345

    Blank lines and ``#`` comments are ignored in both files.
    """
    emails = []
    for line in students_text.splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            emails.append(stripped)
    identities: dict[str, list[str]] = {}
    if identities_text:
        for line_no, line in enumerate(identities_text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            email, sep, rest = stripped.partition(":")
            if not sep:
                raise RegistryFileError(f"identity sidecar line {line_no} has no ':' separator")
            identities[email.strip()] = [part.strip() for part in rest.split("|")]
    return StudentRegistry(emails, identities, salt=salt)


def check_registration(email: str, registry: StudentRegistry) -> str:
    """Return the stable pseudonym for a registered address.

    Raises:
        InvalidEmailSyntax: the address does not look like an e-mail.
        NotRegistered: the address is not on the course list.
    """
    if not registry.is_registered(email):
        raise NotRegistered()
    return registry.pseudonym(email)


def scrub_submission(flattened_text: str, known_identity_strings) -> str:
    """Replace identity strings with [REDACTED], leaving marker lines intact.

    Matching is exact-string and case-insensitive. Longer strings are
    replaced first so a full name never leaves a residue when one of its
    parts is also listed. Marker lines are exempt: scrubbing must not break
    block structure.
    """
    strings = sorted({s for s in known_identity_strings if s}, key=len, reverse=True)
    if not strings:
        return flattened_text
    pattern = re.compile("|".join(re.escape(s) for s in strings), re.IGNORECASE)
    lines = []
    for line in flattened_text.splitlines():
        lines.append(line if is_marker_line(line) else pattern.sub(REDACTED, line))
    tail = "\n" if flattened_text.endswith("\n") else ""
    return "\n".join(lines) + tail


@dataclass
class SessionState:
    """One upload session: artifacts, result payload, and download token."""

    session_id: str
    pseudonym: str
    uploaded_at: float
    download_token: str
    status: str = "grading"
    submission_bytes: bytes | None = None
    merged_bytes: bytes | None = None
    result: object | None = None
    error_detail: object | None = None
    download_token_used: bool = False

    def blob_bytes(self) -> int:
        return len(self.submission_bytes or b"") + len(self.merged_bytes or b"")


class SessionStore:
    """In-memory session store with delete-after-download and TTL expiry.

    Submission and feedback bytes are dropped when the download is consumed;
    purge removes the whole session. Sessions older than ``ttl_seconds`` are
    swept on every access.
    """

    def __init__(self, ttl_seconds: float = 24 * 3600, clock=time.time):
        self._ttl = ttl_seconds
        self._clock = clock
        self._sessions: dict[str, SessionState] = {}
        self._lock = threading.Lock()

    def create(self, pseudonym: str, submission_bytes: bytes | None = None) -> SessionState:
        state = SessionState(
            session_id=secrets.token_urlsafe(16),
            pseudonym=pseudonym,
            uploaded_at=self._clock(),
            download_token=secrets.token_urlsafe(16),
            submission_bytes=submission_bytes,
        )
        with self._lock:
            self._sweep_locked()
            self._sessions[state.session_id] = state
        return state

    def get(self, session_id: str) -> SessionState:
        with self._lock:
            self._sweep_locked()
            state = self._sessions.get(session_id)
            if state is None:
                raise UnknownSession(session_id)
            return state

    def consume_download(self, session_id: str, token: str) -> bytes:
        """Hand out the merged document once, then drop stored artifacts.

        Raises:
            UnknownSession: no such session (or expired).
            PermissionError: token wrong or already used.
            LookupError: grading has not produced a document yet.
        """
        with self._lock:
            self._sweep_locked()
            state = self._sessions.get(session_id)
            if state is None:
                raise UnknownSession(session_id)
            if state.download_token_used or not hmac.compare_digest(state.download_token, token):
                raise PermissionError("download token invalid or already used")
            if state.merged_bytes is None:
                raise LookupError("no graded document stored for this session")
            payload = state.merged_bytes
            state.download_token_used = True
            state.merged_bytes = None
            state.submission_bytes = None
            return payload

    def purge(self, session_id: str) -> None:
        """Remove the session and all its artifacts. Second call errors."""
        with self._lock:
            self._sweep_locked()
            if self._sessions.pop(session_id, None) is None:
                raise UnknownSession(session_id)

    def scan_blobs(self) -> dict[str, int]:
        """Bytes of stored document artifacts per session (for retention audits)."""
        with self._lock:
            self._sweep_locked()
            return {sid: s.blob_bytes() for sid, s in self._sessions.items() if s.blob_bytes() > 0}

    def session_ids(self) -> list[str]:
        with self._lock:
            self._sweep_locked()
            return list(self._sessions)

    def _sweep_locked(self) -> None:
        now = self._clock()
        expired = [sid for sid, s in self._sessions.items() if now - s.uploaded_at > self._ttl]
        for sid in expired:
            del self._sessions[sid]
