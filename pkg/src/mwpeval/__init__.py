"""Evaluate language models on solving math word problems versus
correcting wrong solutions, with diagnostic correction prompting."""

from .errors import (
    BackendError,
    ConfigurationError,
    DataError,
    HarnessError,
    ScriptedLookupError,
    UsageError,
    VerificationError,
)
from .extraction import NumericAnswer, equal, extract, parse_numeric, scan_numbers
from .triplets import (
    Dataset,
    Triplet,
    derive_brief_explanation,
    ingest_gsm8k,
    ingest_mathdial,
    load_dataset,
    save_dataset,
)
from .prompting import (
    ALL_DOP_LEVELS,
    CORRECTION_MODES,
    REASONING_MODE,
    DopLevel,
    GenerationParams,
    PromptMode,
    RenderedPrompt,
    TaskKind,
    TemplateRegistry,
    list_templates,
    render,
)
from .scoring import JointOutcome, Outcome, Quadrant, join, score
from .backends import (
    CompletionResult,
    HttpChatBackend,
    ModelSpec,
    RateLimiter,
    RetryPolicy,
    ScriptedBackend,
    create_backend,
    scripted_key,
)
from .runner import (
    ExperimentConfig,
    RunRecord,
    RunSummary,
    load_records,
    load_scored,
    rescore,
    run,
    write_scored,
)
from .metrics import (
    QuadrantCounts,
    bootstrap_ci,
    dop_pass_rates,
    e_ratios,
    format_rate,
    quadrants,
    rates,
    success_rate,
)
from .report import (
    BootstrapSpec,
    RateReport,
    build_reports,
    load_published,
    published_reports,
    verify_published,
    write_report_bundle,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_DOP_LEVELS",
    "BackendError",
    "BootstrapSpec",
    "CompletionResult",
    "ConfigurationError",
    "CORRECTION_MODES",
    "DataError",
    "Dataset",
    "DopLevel",
    "ExperimentConfig",
    "GenerationParams",
    "HarnessError",
    "HttpChatBackend",
    "JointOutcome",
    "ModelSpec",
    "NumericAnswer",
    "Outcome",
    "PromptMode",
    "Quadrant",
    "QuadrantCounts",
    "RateLimiter",
    "RateReport",
    "REASONING_MODE",
    "RenderedPrompt",
    "RetryPolicy",
    "RunRecord",
    "RunSummary",
    "ScriptedBackend",
    "ScriptedLookupError",
    "TaskKind",
    "TemplateRegistry",
    "Triplet",
    "UsageError",
    "VerificationError",
    "bootstrap_ci",
    "build_reports",
    "create_backend",
    "derive_brief_explanation",
    "dop_pass_rates",
    "e_ratios",
    "equal",
    "extract",
    "format_rate",
    "ingest_gsm8k",
    "ingest_mathdial",
    "join",
    "list_templates",
    "load_dataset",
    "load_published",
    "load_records",
    "load_scored",
    "parse_numeric",
    "published_reports",
    "quadrants",
    "rates",
    "render",
    "rescore",
    "run",
    "save_dataset",
    "scan_numbers",
    "score",
    "scripted_key",
    "success_rate",
    "verify_published",
    "write_report_bundle",
    "write_scored",
]
