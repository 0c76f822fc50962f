"""Experiment runner: content-addressed, append-only, resumable.

A run expands the dataset into cells, one per (triplet, task, mode).
Each cell's prompt gets a content hash, and (model name, content hash)
is the cache key. Records append to records.jsonl, one full line per
completed cell, so a killed run loses at most its in-flight cells and a
rerun with the same config replays everything already on disk and
dispatches only the remainder. Rerunning a completed run performs zero
backend calls.

Backend errors are recorded on the affected cell and do not abort the
run; anything else (including interrupts) does abort, leaving the log
ready for resumption.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
import threading
import uuid
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

from .backends import Backend, ModelSpec, create_backend
from .errors import BackendError, DataError, UsageError
from .prompting import (
    CORRECTION_MODES,
    HASH_ALGORITHM,
    REASONING_MODE,
    ALL_DOP_LEVELS,
    DopLevel,
    PromptMode,
    RenderedPrompt,
    TaskKind,
    TemplateRegistry,
    render,
)
from .scoring import Outcome, score
from .triplets import TOOL_VERSION, Dataset, Triplet, load_dataset

log = logging.getLogger(__name__)

RECORD_FIELDS = (
    "run_id",
    "triplet_id",
    "model",
    "task",
    "dop",
    "template_id",
    "content_hash",
    "prompt_text",
    "response_text",
    "error",
    "attempts",
    "latency_ms",
    "created_at",
)


@dataclass(frozen=True)
class RunRecord:
    """One completed cell: the prompt sent and what came back."""

    run_id: str
    triplet_id: str
    model: str
    task: str
    dop: str | None
    template_id: str
    content_hash: str
    prompt_text: str
    response_text: str | None
    error: str | None
    attempts: int
    latency_ms: float
    created_at: str

    def to_json_line(self) -> str:
        return json.dumps(
            {name: getattr(self, name) for name in RECORD_FIELDS}, ensure_ascii=False
        )

    @classmethod
    def from_json_line(cls, line: str, lineno: int | None = None) -> "RunRecord":
        where = f" at line {lineno}" if lineno is not None else ""
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid record JSON{where}: {exc}") from exc
        missing = [name for name in RECORD_FIELDS if name not in payload]
        extra = [name for name in payload if name not in RECORD_FIELDS]
        if missing or extra:
            raise DataError(
                f"run record{where} has wrong schema: missing={missing or None} "
                f"unexpected={extra or None}"
            )
        return cls(**{name: payload[name] for name in RECORD_FIELDS})

    @property
    def mode(self) -> PromptMode:
        if self.task == TaskKind.REASONING.value:
            return REASONING_MODE
        return CORRECTION_MODES[DopLevel(self.dop)]


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    model: ModelSpec
    output_dir: str
    tasks: tuple[TaskKind, ...] = (TaskKind.REASONING, TaskKind.CORRECTION)
    modes: tuple[DopLevel, ...] = ALL_DOP_LEVELS
    concurrency: int = 1
    templates_dir: str | None = None
    retry_failed: bool = False

    def __post_init__(self) -> None:
        if self.concurrency < 1:
            raise UsageError(f"concurrency must be >= 1, got {self.concurrency}")
        if not self.tasks:
            raise UsageError("tasks must name at least one of reasoning, correction")
        if TaskKind.CORRECTION in self.tasks and not self.modes:
            raise UsageError("correction runs need at least one mode")
        if len(set(self.tasks)) != len(self.tasks) or len(set(self.modes)) != len(self.modes):
            raise UsageError("tasks and modes must not repeat")

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset,
            "model": self.model.to_dict(),
            "output_dir": self.output_dir,
            "tasks": [t.value for t in self.tasks],
            "modes": [m.value for m in self.modes],
            "concurrency": self.concurrency,
            "templates_dir": self.templates_dir,
            "retry_failed": self.retry_failed,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(payload, dict):
            raise UsageError("experiment config must be a JSON object")
        known = {
            "dataset",
            "model",
            "output_dir",
            "tasks",
            "modes",
            "concurrency",
            "templates_dir",
            "retry_failed",
        }
        unknown = set(payload) - known
        if unknown:
            raise UsageError(
                f"unknown config keys: {sorted(unknown)}; known: {sorted(known)}"
            )
        for required in ("dataset", "model", "output_dir"):
            if required not in payload:
                raise UsageError(f"config is missing required key {required!r}")
        try:
            tasks = tuple(TaskKind(t) for t in payload.get("tasks", ["reasoning", "correction"]))
        except ValueError as exc:
            raise UsageError(f"bad task name: {exc}") from exc
        try:
            modes = tuple(
                DopLevel(m)
                for m in payload.get("modes", [l.value for l in ALL_DOP_LEVELS])
            )
        except ValueError as exc:
            raise UsageError(f"bad mode name: {exc}") from exc
        return cls(
            dataset=payload["dataset"],
            model=ModelSpec.from_dict(payload["model"]),
            output_dir=payload["output_dir"],
            tasks=tasks,
            modes=modes,
            concurrency=payload.get("concurrency", 1),
            templates_dir=payload.get("templates_dir"),
            retry_failed=bool(payload.get("retry_failed", False)),
        )

    @classmethod
    def from_json_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(payload)


@dataclass
class RunSummary:
    run_dir: Path
    records_path: Path
    total_cells: int
    cached: int
    fresh: int
    failed: int
    skipped_reasoning_only: int


@dataclass(frozen=True)
class _Cell:
    triplet: Triplet
    prompt: RenderedPrompt


def _utc_now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def load_records(path: str | Path, tolerate_torn_tail: bool = True) -> list[RunRecord]:
    """Read an append-only record log.

    A torn final line (the signature of a killed writer) is dropped with
    a warning; a torn line anywhere else is corruption and raises.
    """
    path = Path(path)
    if not path.exists():
        return []
    raw_lines = path.read_text(encoding="utf-8").splitlines()
    records: list[RunRecord] = []
    for lineno, line in enumerate(raw_lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(RunRecord.from_json_line(line, lineno))
        except DataError:
            if tolerate_torn_tail and lineno == len(raw_lines):
                log.warning(
                    "%s: dropping torn final record line %d (interrupted write)",
                    path,
                    lineno,
                )
                continue
            raise
    return records


def index_records(records: Iterable[RunRecord]) -> dict[tuple[str, str], RunRecord]:
    """Latest record per (model, content hash); a success is never
    displaced by a later error."""
    index: dict[tuple[str, str], RunRecord] = {}
    for record in records:
        key = (record.model, record.content_hash)
        existing = index.get(key)
        if existing is not None and existing.error is None and record.error is not None:
            continue
        index[key] = record
    return index


def build_cells(
    dataset: Dataset, config: ExperimentConfig, registry: TemplateRegistry
) -> tuple[list[_Cell], int]:
    """All (triplet, task, mode) cells, with reasoning-only triplets
    excluded from correction. Returns (cells, skipped correction cells)."""
    cells: list[_Cell] = []
    skipped = 0
    for task in config.tasks:
        if task is TaskKind.REASONING:
            for triplet in dataset:
                cells.append(
                    _Cell(triplet, render(triplet, REASONING_MODE, config.model.params, registry))
                )
        else:
            for mode_level in config.modes:
                mode = CORRECTION_MODES[mode_level]
                for triplet in dataset:
                    if triplet.reasoning_only:
                        skipped += 1
                        continue
                    cells.append(
                        _Cell(triplet, render(triplet, mode, config.model.params, registry))
                    )
    by_hash: dict[str, _Cell] = {}
    for cell in cells:
        other = by_hash.get(cell.prompt.content_hash)
        if other is not None:
            raise DataError(
                "content hash collision between cells "
                f"{other.triplet.id}/{other.prompt.mode.key} and "
                f"{cell.triplet.id}/{cell.prompt.mode.key}; triplet texts "
                "are probably duplicated"
            )
        by_hash[cell.prompt.content_hash] = cell
    if skipped:
        log.warning(
            "excluded %d correction cells for reasoning-only triplets", skipped
        )
    return cells, skipped


class _RecordWriter:
    """Serialized append-and-flush so each record lands as one full line."""

    def __init__(self, path: Path) -> None:
        self._handle = path.open("a", encoding="utf-8")
        self._lock = threading.Lock()

    def append(self, record: RunRecord) -> None:
        line = record.to_json_line() + "\n"
        with self._lock:
            self._handle.write(line)
            self._handle.flush()

    def close(self) -> None:
        self._handle.close()


def _cache_identity(config: ExperimentConfig, dataset: Dataset, registry: TemplateRegistry) -> dict[str, Any]:
    return {
        "dataset_digest": dataset.digest,
        "model": config.model.to_dict(),
        "template_ids": registry.template_ids(),
    }


def run(config: ExperimentConfig, backend: Backend | None = None) -> RunSummary:
    """Execute (or resume) the experiment described by config."""
    dataset = load_dataset(config.dataset)
    registry = TemplateRegistry.load(config.templates_dir)
    cells, skipped = build_cells(dataset, config, registry)

    run_dir = Path(config.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    records_path = run_dir / "records.jsonl"
    identity = _cache_identity(config, dataset, registry)
    identity_path = run_dir / "config.json"
    if identity_path.exists():
        try:
            previous = json.loads(identity_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"unreadable {identity_path}: {exc}") from exc
        if previous.get("identity") != identity:
            raise DataError(
                f"{run_dir} already holds records for a different "
                "dataset/model/template combination; use a fresh output_dir"
            )
    identity_path.write_text(
        json.dumps(
            {"config": config.to_dict(), "identity": identity},
            ensure_ascii=False,
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )

    index = index_records(load_records(records_path))
    pending: list[_Cell] = []
    cached = 0
    for cell in cells:
        existing = index.get((config.model.name, cell.prompt.content_hash))
        if existing is not None and not (config.retry_failed and existing.error):
            cached += 1
        else:
            pending.append(cell)

    if backend is None and pending:
        backend = create_backend(config.model)

    run_id = uuid.uuid4().hex[:12]
    writer = _RecordWriter(records_path)
    fresh = 0
    failed = 0

    def work(cell: _Cell) -> bool:
        """Complete one cell and append its record. True means success."""
        prompt = cell.prompt
        base = dict(
            run_id=run_id,
            triplet_id=cell.triplet.id,
            model=config.model.name,
            task=prompt.mode.task.value,
            dop=prompt.mode.dop.value if prompt.mode.dop else None,
            template_id=prompt.template_id,
            content_hash=prompt.content_hash,
            prompt_text=prompt.text,
        )
        try:
            result = backend.complete(prompt)
            record = RunRecord(
                **base,
                response_text=result.text,
                error=None,
                attempts=result.attempts,
                latency_ms=result.latency_ms,
                created_at=_utc_now(),
            )
        except BackendError as exc:
            record = RunRecord(
                **base,
                response_text=None,
                error=str(exc),
                attempts=0,
                latency_ms=0.0,
                created_at=_utc_now(),
            )
        writer.append(record)
        return record.error is None

    try:
        if pending:
            executor = ThreadPoolExecutor(max_workers=config.concurrency)
            try:
                futures = [executor.submit(work, cell) for cell in pending]
                done, _ = wait(futures, return_when=FIRST_EXCEPTION)
                aborted: BaseException | None = None
                for future in done:
                    exc = future.exception()
                    if exc is not None:
                        aborted = exc
                        break
                if aborted is not None:
                    raise aborted
                for future in done:
                    if future.result():
                        fresh += 1
                    else:
                        failed += 1
            finally:
                executor.shutdown(wait=True, cancel_futures=True)
    finally:
        writer.close()

    manifest = {
        "run_id": run_id,
        "created_at": _utc_now(),
        "tool_version": TOOL_VERSION,
        "hash_algorithm": HASH_ALGORITHM,
        "model": config.model.name,
        "generation_params": config.model.params.to_dict(),
        "dataset": {
            "path": str(config.dataset),
            "digest": dataset.digest,
            "count": len(dataset),
        },
        "template_ids": registry.template_ids(),
        "tasks": [t.value for t in config.tasks],
        "modes": [m.value for m in config.modes],
        "cells": {
            "total": len(cells),
            "cached": cached,
            "fresh": fresh,
            "failed": failed,
            "skipped_reasoning_only": skipped,
        },
    }
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return RunSummary(
        run_dir=run_dir,
        records_path=records_path,
        total_cells=len(cells),
        cached=cached,
        fresh=fresh,
        failed=failed,
        skipped_reasoning_only=skipped,
    )


def rescore(
    records_path: str | Path,
    dataset: Dataset | str | Path,
    tolerance: float | None = None,
) -> list[Outcome]:
    """Re-judge recorded responses against the dataset, deterministically.

    Records are deduplicated by cache key before scoring and the result
    is sorted, so rescoring the same inputs twice is byte-identical.
    """
    if not isinstance(dataset, Dataset):
        dataset = load_dataset(dataset)
    records_path = Path(records_path)
    if records_path.is_dir():
        records_path = records_path / "records.jsonl"
    if not records_path.exists():
        raise DataError(f"no record log at {records_path}")
    index = index_records(load_records(records_path))
    outcomes: list[Outcome] = []
    kwargs = {} if tolerance is None else {"tolerance": tolerance}
    for record in index.values():
        triplet = dataset.by_id.get(record.triplet_id)
        if triplet is None:
            raise DataError(
                f"record references unknown triplet id {record.triplet_id!r}; "
                "was the right dataset supplied?"
            )
        mode = record.mode
        outcomes.append(
            score(
                triplet,
                record.response_text,
                mode.task,
                mode.dop,
                model=record.model,
                template_id=record.template_id,
                error=record.error,
                **kwargs,
            )
        )
    outcomes.sort(key=lambda o: (o.triplet_id, o.task.value, o.dop.value if o.dop else ""))
    return outcomes


def write_scored(outcomes: Iterable[Outcome], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for outcome in outcomes:
            handle.write(json.dumps(outcome.to_dict(), ensure_ascii=False) + "\n")
    return path


def load_scored(path: str | Path) -> list[Outcome]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"scored outcome file not found: {path}")
    outcomes = []
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path} line {lineno}: invalid JSON: {exc}") from exc
            outcomes.append(Outcome.from_dict(payload))
    return outcomes
