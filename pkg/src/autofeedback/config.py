"""Runtime configuration from one INI file plus environment overrides.

Environment always wins over the file, which wins over built-in defaults.
The pseudonym salt is accepted only from the environment so it never lands
in a config file checked into version control.
"""

import configparser
import os
from dataclasses import dataclass, replace
from pathlib import Path

from .llm_gateway import GenerationConfig, HttpProvider, LLMGateway, MockProvider
from .privacy import StudentRegistry, load_student_registry
from .prompt_engine import PromptLibrary, SolutionRegistry, load_solution_registry

__all__ = ["AppConfig", "load_config", "ConfigError", "build_gateway", "build_registries", "build_prompt_library"]

ENV_PREFIX = "AUTOFEEDBACK_"


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class AppConfig:
    # provider
    provider: str = "mock"
    endpoint: str | None = None
    credential: str | None = None
    model: str | None = None
    request_timeout: float = 30.0
    retry_limit: int = 3
    backoff_base: float = 1.0
    max_concurrency: int = 4
    mock_fixture: str | None = None
    mock_default: str | None = None
    # paths
    solutions_path: str | None = None
    students_path: str | None = None
    identities_path: str | None = None
    templates_dir: str | None = None
    usage_log_path: str = "usage.log"
    # service
    salt: str | None = None
    session_ttl: float = 24 * 3600.0
    upload_cap: int = 5 * 1024 * 1024
    request_deadline: float = 120.0
    grade_in_background: bool = False


_FILE_FIELDS = {
    ("provider", "provider"): ("provider", str),
    ("provider", "endpoint"): ("endpoint", str),
    ("provider", "credential"): ("credential", str),
    ("provider", "model"): ("model", str),
    ("provider", "timeout"): ("request_timeout", float),
    ("provider", "retry_limit"): ("retry_limit", int),
    ("provider", "backoff_base"): ("backoff_base", float),
    ("provider", "max_concurrency"): ("max_concurrency", int),
    ("provider", "mock_fixture"): ("mock_fixture", str),
    ("provider", "mock_default"): ("mock_default", str),
    ("paths", "solutions"): ("solutions_path", str),
    ("paths", "students"): ("students_path", str),
    ("paths", "identities"): ("identities_path", str),
    ("paths", "templates_dir"): ("templates_dir", str),
    ("paths", "usage_log"): ("usage_log_path", str),
    ("service", "session_ttl"): ("session_ttl", float),
    ("service", "upload_cap"): ("upload_cap", int),
    ("service", "request_deadline"): ("request_deadline", float),
    ("service", "grade_in_background"): ("grade_in_background", bool),
}

_ENV_FIELDS = {
    "PROVIDER": ("provider", str),
    "ENDPOINT": ("endpoint", str),
    "CREDENTIAL": ("credential", str),
    "MODEL": ("model", str),
    "TIMEOUT": ("request_timeout", float),
    "RETRY_LIMIT": ("retry_limit", int),
    "BACKOFF_BASE": ("backoff_base", float),
    "MAX_CONCURRENCY": ("max_concurrency", int),
    "MOCK_FIXTURE": ("mock_fixture", str),
    "MOCK_DEFAULT": ("mock_default", str),
    "SOLUTIONS": ("solutions_path", str),
    "STUDENTS": ("students_path", str),
    "IDENTITIES": ("identities_path", str),
    "TEMPLATES_DIR": ("templates_dir", str),
    "USAGE_LOG": ("usage_log_path", str),
    "SALT": ("salt", str),
    "SESSION_TTL": ("session_ttl", float),
    "UPLOAD_CAP": ("upload_cap", int),
    "REQUEST_DEADLINE": ("request_deadline", float),
    "BACKGROUND": ("grade_in_background", bool),
}

_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


def _cast(raw: str, kind, where: str):
    if kind is bool:
        lowered = raw.strip().lower()
        if lowered in _TRUE_WORDS:
            return True
        if lowered in _FALSE_WORDS:
            return False
        raise ConfigError(f"{where}: {raw!r} is not a boolean")
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{where}: {raw!r} is not a valid {kind.__name__}") from None


def load_config(path: str | Path | None = None, env=None) -> AppConfig:
    """Merge defaults, the optional INI file, and AUTOFEEDBACK_* variables."""
    env = os.environ if env is None else env
    config = AppConfig()

    if path is not None:
        parser = configparser.ConfigParser()
        try:
            with open(path, encoding="utf-8") as handle:
                parser.read_file(handle)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        updates = {}
        for (section, option), (field_name, kind) in _FILE_FIELDS.items():
            if parser.has_option(section, option):
                updates[field_name] = _cast(parser.get(section, option), kind, f"{section}.{option}")
        config = replace(config, **updates)

    updates = {}
    for suffix, (field_name, kind) in _ENV_FIELDS.items():
        raw = env.get(ENV_PREFIX + suffix)
        if raw is not None:
            updates[field_name] = _cast(raw, kind, ENV_PREFIX + suffix)
    return replace(config, **updates)


def build_gateway(config: AppConfig) -> LLMGateway:
    """Construct the configured provider behind a retrying gateway."""
    if config.provider == "mock":
        if config.mock_fixture:
            provider = MockProvider.from_fixture(config.mock_fixture, default=config.mock_default)
        elif config.mock_default is not None:
            provider = MockProvider(default=config.mock_default)
        else:
            raise ConfigError("mock provider needs mock_fixture or mock_default")
    elif config.provider == "http":
        if not config.endpoint or not config.model:
            raise ConfigError("http provider needs endpoint and model")
        provider = HttpProvider(config.endpoint, config.model, credential=config.credential)
    else:
        raise ConfigError(f"unknown provider {config.provider!r}")
    return LLMGateway(
        provider,
        GenerationConfig(request_timeout=config.request_timeout),
        retry_limit=config.retry_limit,
        backoff_base=config.backoff_base,
        max_concurrency=config.max_concurrency,
    )


def build_registries(config: AppConfig) -> tuple[SolutionRegistry, StudentRegistry]:
    if not config.solutions_path:
        raise ConfigError("no solutions file configured")
    if not config.students_path:
        raise ConfigError("no students file configured")
    if not config.salt:
        raise ConfigError(f"no pseudonym salt configured (set {ENV_PREFIX}SALT)")
    solutions = load_solution_registry(Path(config.solutions_path).read_text(encoding="utf-8"))
    identities_text = None
    if config.identities_path:
        identities_text = Path(config.identities_path).read_text(encoding="utf-8")
    students = load_student_registry(
        Path(config.students_path).read_text(encoding="utf-8"),
        identities_text,
        salt=config.salt.encode("utf-8"),
    )
    return solutions, students


def build_prompt_library(config: AppConfig) -> PromptLibrary:
    if config.templates_dir:
        return PromptLibrary.from_directory(config.templates_dir)
    return PromptLibrary.packaged()
