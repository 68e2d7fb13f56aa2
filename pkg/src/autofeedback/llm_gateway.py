"""Provider-agnostic dispatch of grading prompts plus the POINTS protocol parser.

Providers implement a single text-completion contract. The gateway adds
deterministic generation parameters (temperature 0, minimal nucleus mass),
bounded retries with exponential backoff, and a concurrency cap. A scripted
mock provider supports offline runs and tests; an HTTP provider talks to a
hosted completion endpoint.
"""

import hashlib
import json
import re
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from pathlib import Path

import requests

__all__ = [
    "GenerationConfig",
    "LLMResponse",
    "Provider",
    "MockProvider",
    "HttpProvider",
    "LLMGateway",
    "parse_points",
    "FailureKind",
    "ProviderFailure",
    "GatewayError",
    "ProviderUnavailable",
    "Timeout",
    "QuotaExceeded",
    "PointsError",
    "MissingPointsMarker",
    "PointsOffGrid",
    "PointsOutOfRange",
]

# Smallest accepted nucleus mass; providers treat it as their most
# deterministic top-p setting.
MIN_NUCLEUS_MASS = 1e-9


@dataclass(frozen=True)
class GenerationConfig:
    temperature: float = 0.0
    nucleus_mass: float = MIN_NUCLEUS_MASS
    max_output_tokens: int = 1024
    request_timeout: float = 30.0

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.nucleus_mass <= 1:
            raise ValueError("nucleus_mass must lie in (0, 1]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be positive")


@dataclass(frozen=True)
class LLMResponse:
    text: str
    latency: float
    provider_id: str
    attempts: int


class FailureKind(Enum):
    UNAVAILABLE = "unavailable"
    TIMEOUT = "timeout"
    QUOTA = "quota"


class ProviderFailure(Exception):
    """Raised by providers for a single failed request attempt.

    ``kind`` accepts a FailureKind member or its string value; anything
    else raises ValueError.
    """

    def __init__(self, kind: FailureKind | str, detail: str):
        super().__init__(detail)
        self.kind = FailureKind(kind)
        self.detail = detail


class GatewayError(Exception):
    """A completion failed after all retry attempts."""

    def __init__(self, detail: str, attempts: int):
        super().__init__(f"{detail} (attempts={attempts})")
        self.detail = detail
        self.attempts = attempts


class ProviderUnavailable(GatewayError):
    pass


class Timeout(GatewayError):
    pass


class QuotaExceeded(GatewayError):
    pass


_ERROR_BY_KIND = {
    FailureKind.UNAVAILABLE: ProviderUnavailable,
    FailureKind.TIMEOUT: Timeout,
    FailureKind.QUOTA: QuotaExceeded,
}


class Provider(ABC):
    """Text-completion backend."""

    provider_id: str = "abstract"

    @abstractmethod
    def generate(self, prompt: str, config: GenerationConfig) -> str:
        """Return the completion text for one request attempt.

        Raises:
            ProviderFailure: the attempt failed (may be retried).
        """

    def ping(self) -> bool:
        """Cheap reachability probe; never issues a grading completion."""
        return True


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class MockProvider(Provider):
    """Scripted provider for offline runs and tests.

    Responses are looked up by sha256 hex digest of the prompt, then by the
    verbatim prompt text, then fall back to ``default``. ``fail_times``
    injects that many failures before the first success; every call is
    recorded in ``calls``.
    """

    provider_id = "mock"

    def __init__(
        self,
        responses: dict[str, str] | None = None,
        default: str | None = None,
        fail_times: int = 0,
        failure_kind: FailureKind | str = FailureKind.UNAVAILABLE,
    ):
        self.responses = dict(responses or {})
        self.default = default
        self.fail_times = fail_times
        self.failure_kind = FailureKind(failure_kind)
        self.calls: list[str] = []
        self._lock = threading.Lock()

    @classmethod
    def from_fixture(cls, path: str | Path, default: str | None = None) -> "MockProvider":
        """Load scripted responses from a JSON file.

        Accepts either a flat object mapping prompts (or digests) to
        response texts, or ``{"responses": {...}, "default": "..."}``.
        """
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError(f"fixture {path} must be a JSON object")
        if isinstance(data.get("responses"), dict):
            responses = data["responses"]
            default = data.get("default", default)
        else:
            responses = data
        if not all(isinstance(k, str) and isinstance(v, str) for k, v in responses.items()):
            raise ValueError(f"fixture {path} must map strings to strings")
        if default is not None and not isinstance(default, str):
            raise ValueError(f"fixture {path} default must be a string")
        return cls(responses=responses, default=default)

    def generate(self, prompt: str, config: GenerationConfig) -> str:
        with self._lock:
            self.calls.append(prompt)
            if self.fail_times > 0:
                self.fail_times -= 1
                raise ProviderFailure(self.failure_kind, "scripted failure")
        digest = prompt_digest(prompt)
        if digest in self.responses:
            return self.responses[digest]
        if prompt in self.responses:
            return self.responses[prompt]
        if self.default is not None:
            return self.default
        raise ProviderFailure(FailureKind.UNAVAILABLE, f"no scripted response for digest {digest[:12]}")


class HttpProvider(Provider):
    """Completion endpoint speaking a small JSON contract.

    Sends ``{"model", "prompt", "temperature", "top_p", "max_tokens"}`` and
    expects ``{"text": "..."}`` back.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        credential: str | None = None,
        provider_id: str = "http",
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.credential = credential
        self.provider_id = provider_id
        self._session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.credential:
            headers["Authorization"] = f"Bearer {self.credential}"
        return headers

    def generate(self, prompt: str, config: GenerationConfig) -> str:
        payload = {
            "model": self.model,
            "prompt": prompt,
            "temperature": config.temperature,
            "top_p": config.nucleus_mass,
            "max_tokens": config.max_output_tokens,
        }
        try:
            response = self._session.post(
                self.endpoint,
                json=payload,
                headers=self._headers(),
                timeout=config.request_timeout,
            )
        except requests.Timeout as exc:
            raise ProviderFailure(FailureKind.TIMEOUT, str(exc)) from exc
        except requests.RequestException as exc:
            raise ProviderFailure(FailureKind.UNAVAILABLE, str(exc)) from exc
        if response.status_code == 429:
            raise ProviderFailure(FailureKind.QUOTA, "rate limited by provider")
        if response.status_code >= 400:
            raise ProviderFailure(FailureKind.UNAVAILABLE, f"provider returned HTTP {response.status_code}")
        try:
            text = response.json()["text"]
        except (ValueError, KeyError) as exc:
            raise ProviderFailure(FailureKind.UNAVAILABLE, f"malformed provider payload: {exc}") from exc
        if not isinstance(text, str):
            raise ProviderFailure(FailureKind.UNAVAILABLE, "provider payload text is not a string")
        return text

    def ping(self) -> bool:
        try:
            self._session.head(self.endpoint, timeout=5)
        except requests.RequestException:
            return False
        return True


class LLMGateway:
    """Retrying, concurrency-capped front end over a Provider.

    The prompt is passed through unmodified. Failed attempts back off
    exponentially (base delay doubling per attempt); the error raised after
    exhaustion carries the attempt count, as does every successful response.
    """

    def __init__(
        self,
        provider: Provider,
        config: GenerationConfig | None = None,
        retry_limit: int = 3,
        backoff_base: float = 1.0,
        max_concurrency: int = 4,
        sleep=time.sleep,
    ):
        if retry_limit < 1:
            raise ValueError("retry_limit must be at least 1")
        self.provider = provider
        self.config = config or GenerationConfig()
        self.retry_limit = retry_limit
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_concurrency)

    def complete(self, prompt: str, config: GenerationConfig | None = None) -> LLMResponse:
        """Request one completion, retrying transient provider failures.

        Raises:
            ProviderUnavailable, Timeout, QuotaExceeded: after the retry
                budget is exhausted; ``attempts`` is set on the error.
        """
        if not prompt:
            raise ValueError("prompt must be non-empty")
        cfg = config or self.config
        last_failure: ProviderFailure | None = None
        for attempt in range(1, self.retry_limit + 1):
            started = time.monotonic()
            try:
                with self._slots:
                    text = self.provider.generate(prompt, cfg)
            except ProviderFailure as failure:
                last_failure = failure
                if attempt < self.retry_limit:
                    self._sleep(self.backoff_base * 2 ** (attempt - 1))
                continue
            return LLMResponse(
                text=text,
                latency=time.monotonic() - started,
                provider_id=self.provider.provider_id,
                attempts=attempt,
            )
        assert last_failure is not None
        raise _ERROR_BY_KIND[last_failure.kind](last_failure.detail, self.retry_limit)


class PointsError(Exception):
    """Base class for POINTS protocol violations."""


class MissingPointsMarker(PointsError):
    def __init__(self) -> None:
        super().__init__("response carries no terminal 'POINTS: <value>' marker")


class PointsOffGrid(PointsError):
    def __init__(self, value: float):
        super().__init__(f"awarded value {value} is not a multiple of 0.5")
        self.value = value


class PointsOutOfRange(PointsError):
    def __init__(self, value: float, max_points: float):
        super().__init__(f"awarded value {value} outside [0, {max_points}]")
        self.value = value
        self.max_points = max_points


_MARKER = "POINTS:"
_VALUE_RE = re.compile(r"[+-]?\d+(?:\.\d+)?")


def parse_points(response_text: str, max_points: float) -> float:
    """Extract the awarded points from a grading response.

    The awarded value follows the LAST ``POINTS:`` occurrence in the text
    and must be a multiple of 0.5 within [0, max_points].

    Raises:
        MissingPointsMarker: no ``POINTS:`` followed by a numeric value.
        PointsOffGrid: the value is not on the 0.5 grid.
        PointsOutOfRange: the value is off-scale (checked after the grid).
    """
    if max_points <= 0:
        raise ValueError("max_points must be positive")
    index = response_text.rfind(_MARKER)
    if index < 0:
        raise MissingPointsMarker()
    tail = response_text[index + len(_MARKER):].lstrip()
    match = _VALUE_RE.match(tail)
    if not match:
        raise MissingPointsMarker()
    value = Decimal(match.group())
    as_float = float(value)
    if value * 2 != (value * 2).to_integral_value():
        raise PointsOffGrid(as_float)
    if not 0 <= as_float <= max_points:
        raise PointsOutOfRange(as_float, max_points)
    return as_float
