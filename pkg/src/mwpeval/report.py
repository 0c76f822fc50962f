"""Rate reports and their renderings, plus published-results verification.

Everything here is deterministic: the same scored outcomes and options
produce byte-identical Markdown, CSV, chart data and SVG, so report
artifacts can be diffed across reruns. Rendered tables show rates after
half-up rounding to three places; report.json keeps full precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

from .errors import DataError, VerificationError
from .metrics import (
    QuadrantCounts,
    UNDEFINED_MARK,
    bootstrap_ci,
    e_ratios,
    format_rate,
    quadrants,
    rates,
)
from .prompting import ALL_DOP_LEVELS, DopLevel, TaskKind
from .scoring import JointOutcome, Outcome, join

_MODE_ORDER = {level: i for i, level in enumerate(ALL_DOP_LEVELS)}


@dataclass(frozen=True)
class BootstrapSpec:
    resamples: int = 1000
    level: float = 0.95
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {"resamples": self.resamples, "level": self.level, "seed": self.seed}


@dataclass(frozen=True)
class RateReport:
    """Rates for one model under one correction mode (mode None when the
    report was built from bare quadrant counts)."""

    model: str
    mode: DopLevel | None
    counts: QuadrantCounts
    r_rate: float
    c_rate: float
    e_r: float | None
    e_c: float | None
    r_ci: tuple[float, float] | None = None
    c_ci: tuple[float, float] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": self.model,
            "mode": self.mode.value if self.mode else None,
            "n": self.counts.n,
            "quadrants": self.counts.to_dict(),
            "r_rate": self.r_rate,
            "c_rate": self.c_rate,
            "e_r": self.e_r,
            "e_c": self.e_c,
            "r_ci": list(self.r_ci) if self.r_ci else None,
            "c_ci": list(self.c_ci) if self.c_ci else None,
        }


def report_from_counts(
    counts: QuadrantCounts, model: str, mode: DopLevel | None = None
) -> RateReport:
    r_rate, c_rate = rates(counts)
    e_r, e_c = e_ratios(counts)
    return RateReport(
        model=model, mode=mode, counts=counts,
        r_rate=r_rate, c_rate=c_rate, e_r=e_r, e_c=e_c,
    )


def _joints_for_mode(
    reasoning_by_id: dict[str, Outcome], corrections: Sequence[Outcome]
) -> list[JointOutcome]:
    joints = []
    for correction in corrections:
        reasoning = reasoning_by_id.get(correction.triplet_id)
        if reasoning is None:
            raise DataError(
                f"triplet {correction.triplet_id} has a correction outcome "
                "but no reasoning outcome; run both tasks before reporting"
            )
        joints.append(join(reasoning, correction))
    return joints


def build_reports(
    outcomes: Iterable[Outcome], bootstrap: BootstrapSpec | None = None
) -> list[RateReport]:
    """One RateReport per (model, correction mode) present in outcomes."""
    by_model: dict[str, list[Outcome]] = {}
    for outcome in outcomes:
        by_model.setdefault(outcome.model, []).append(outcome)
    reports: list[RateReport] = []
    for model in sorted(by_model):
        pool = by_model[model]
        reasoning_by_id: dict[str, Outcome] = {}
        for outcome in pool:
            if outcome.task is TaskKind.REASONING:
                if outcome.triplet_id in reasoning_by_id:
                    raise DataError(
                        f"duplicate reasoning outcome for triplet {outcome.triplet_id}"
                    )
                reasoning_by_id[outcome.triplet_id] = outcome
        corrections_by_mode: dict[DopLevel, list[Outcome]] = {}
        for outcome in pool:
            if outcome.task is TaskKind.CORRECTION:
                assert outcome.dop is not None
                corrections_by_mode.setdefault(outcome.dop, []).append(outcome)
        if not corrections_by_mode:
            raise DataError(
                f"model {model}: no correction outcomes; nothing to report"
            )
        for mode in sorted(corrections_by_mode, key=_MODE_ORDER.__getitem__):
            joints = _joints_for_mode(reasoning_by_id, corrections_by_mode[mode])
            counts = quadrants(joints)
            r_rate, c_rate = rates(counts)
            e_r, e_c = e_ratios(counts)
            r_ci = c_ci = None
            if bootstrap is not None:
                r_ci = bootstrap_ci(
                    joints,
                    lambda js: sum(j.reasoning_success for j in js) / len(js),
                    resamples=bootstrap.resamples,
                    level=bootstrap.level,
                    seed=bootstrap.seed,
                )
                c_ci = bootstrap_ci(
                    joints,
                    lambda js: sum(j.correction_success for j in js) / len(js),
                    resamples=bootstrap.resamples,
                    level=bootstrap.level,
                    seed=bootstrap.seed,
                )
            reports.append(
                RateReport(
                    model=model, mode=mode, counts=counts,
                    r_rate=r_rate, c_rate=c_rate, e_r=e_r, e_c=e_c,
                    r_ci=r_ci, c_ci=c_ci,
                )
            )
    return reports


def _mode_label(mode: DopLevel | None) -> str:
    return mode.value if mode else "-"


def _ci_text(ci: tuple[float, float] | None) -> str:
    if ci is None:
        return UNDEFINED_MARK
    return f"[{format_rate(ci[0])}, {format_rate(ci[1])}]"


def render_markdown(
    reports: Sequence[RateReport], meta: dict[str, Any] | None = None
) -> str:
    """Markdown report: metadata bullets, then one row per (model, mode)."""
    with_ci = any(r.r_ci or r.c_ci for r in reports)
    lines = ["# Solving vs correction rates", ""]
    for key in sorted(meta or {}):
        lines.append(f"- {key}: {meta[key]}")
    if meta:
        lines.append("")
    header = [
        "Model", "Mode", "n", "R-rate", "C-rate",
        "sR+sC", "sR+uC", "uR+sC", "uR+uC", "E_r", "E_c",
    ]
    if with_ci:
        header += ["R-rate CI", "C-rate CI"]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "|".join(" --- " for _ in header) + "|")
    for report in reports:
        c = report.counts
        row = [
            report.model,
            _mode_label(report.mode),
            str(c.n),
            format_rate(report.r_rate),
            format_rate(report.c_rate),
            str(c.srsc),
            str(c.sruc),
            str(c.ursc),
            str(c.uruc),
            format_rate(report.e_r),
            format_rate(report.e_c),
        ]
        if with_ci:
            row += [_ci_text(report.r_ci), _ci_text(report.c_ci)]
        lines.append("| " + " | ".join(row) + " |")
    lines.append("")
    return "\n".join(lines)


def render_csv(reports: Sequence[RateReport]) -> str:
    """CSV with the same presentation rounding as the Markdown table;
    undefined ratios are empty cells."""
    def cell(value: float | None) -> str:
        return "" if value is None else format_rate(value)

    lines = [
        "model,mode,n,srsc,sruc,ursc,uruc,r_rate,c_rate,e_r,e_c,"
        "r_ci_low,r_ci_high,c_ci_low,c_ci_high"
    ]
    for report in reports:
        c = report.counts
        r_ci = report.r_ci or (None, None)
        c_ci = report.c_ci or (None, None)
        lines.append(
            ",".join(
                [
                    report.model,
                    _mode_label(report.mode),
                    str(c.n),
                    str(c.srsc),
                    str(c.sruc),
                    str(c.ursc),
                    str(c.uruc),
                    cell(report.r_rate),
                    cell(report.c_rate),
                    cell(report.e_r),
                    cell(report.e_c),
                    cell(r_ci[0]),
                    cell(r_ci[1]),
                    cell(c_ci[0]),
                    cell(c_ci[1]),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def chart_data(reports: Sequence[RateReport]) -> dict[str, Any]:
    """Correction rate per model, one series per mode."""
    models: list[str] = []
    for report in reports:
        if report.model not in models:
            models.append(report.model)
    modes: list[DopLevel | None] = []
    for report in reports:
        if report.mode not in modes:
            modes.append(report.mode)
    series = []
    for mode in modes:
        points = [
            {"model": r.model, "value": r.c_rate}
            for r in reports
            if r.mode == mode
        ]
        series.append({"mode": _mode_label(mode), "points": points})
    return {"metric": "c_rate", "models": models, "series": series}


_SERIES_COLORS = ("#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#b07aa1", "#76b7b2")


def render_svg(chart: dict[str, Any]) -> str:
    """A small static grouped bar chart of the chart data. Presentation
    only; report.json is the machine-readable artifact."""
    models: list[str] = chart["models"]
    series: list[dict[str, Any]] = chart["series"]
    bar = 18
    gap = 6
    group_gap = 16
    left = 150
    top = 30
    scale = 360.0
    group_h = len(series) * (bar + gap) - gap + group_gap
    height = top + len(models) * group_h + 30
    width = left + int(scale) + 120
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
        f'<text x="{left}" y="16" font-weight="bold">{chart["metric"]} by model and mode</text>',
    ]
    values = {(s["mode"], p["model"]): p["value"] for s in series for p in s["points"]}
    for gi, model in enumerate(models):
        gy = top + gi * group_h
        parts.append(
            f'<text x="{left - 8}" y="{gy + group_h / 2 - group_gap / 2}" '
            f'text-anchor="end">{model}</text>'
        )
        for si, s in enumerate(series):
            value = values.get((s["mode"], model))
            if value is None:
                continue
            y = gy + si * (bar + gap)
            w = max(1, round(value * scale))
            color = _SERIES_COLORS[si % len(_SERIES_COLORS)]
            parts.append(
                f'<rect x="{left}" y="{y}" width="{w}" height="{bar}" fill="{color}"/>'
            )
            parts.append(
                f'<text x="{left + w + 4}" y="{y + bar - 4}">'
                f'{s["mode"]} {format_rate(value)}</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_report_bundle(
    reports: Sequence[RateReport],
    out_dir: str | Path,
    meta: dict[str, Any] | None = None,
    bootstrap: BootstrapSpec | None = None,
) -> dict[str, Path]:
    """Write report.json, report.md, report.csv, chart_data.json and
    chart.svg into out_dir. Returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "meta": dict(sorted((meta or {}).items())),
        "bootstrap": bootstrap.to_dict() if bootstrap else None,
        "reports": [r.to_dict() for r in reports],
    }
    chart = chart_data(reports)
    paths = {
        "json": out_dir / "report.json",
        "markdown": out_dir / "report.md",
        "csv": out_dir / "report.csv",
        "chart": out_dir / "chart_data.json",
        "svg": out_dir / "chart.svg",
    }
    paths["json"].write_text(
        json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    paths["markdown"].write_text(render_markdown(reports, meta), encoding="utf-8")
    paths["csv"].write_text(render_csv(reports), encoding="utf-8")
    paths["chart"].write_text(
        json.dumps(chart, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    paths["svg"].write_text(render_svg(chart), encoding="utf-8")
    return paths


# --- published reference results ---------------------------------------


@dataclass(frozen=True)
class PublishedRow:
    model: str
    r_rate: float
    c_rate: float
    counts: QuadrantCounts
    note: str | None = None


@dataclass(frozen=True)
class PublishedTable:
    dataset_size: int
    rate_tolerance: float
    rows: tuple[PublishedRow, ...]


def load_published(path: str | Path | None = None) -> PublishedTable:
    """The bundled reference table, or one in the same JSON format."""
    if path is None:
        text = (resources.files("mwpeval") / "data" / "published_results.json").read_text(
            encoding="utf-8"
        )
    else:
        path = Path(path)
        if not path.exists():
            raise DataError(f"published results file not found: {path}")
        text = path.read_text(encoding="utf-8")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"published results file is not valid JSON: {exc}") from exc
    try:
        rows = tuple(
            PublishedRow(
                model=row["model"],
                r_rate=float(row["r_rate"]),
                c_rate=float(row["c_rate"]),
                counts=QuadrantCounts(
                    srsc=row["srsc"], sruc=row["sruc"], ursc=row["ursc"], uruc=row["uruc"]
                ),
                note=row.get("note"),
            )
            for row in payload["rows"]
        )
        return PublishedTable(
            dataset_size=int(payload["dataset_size"]),
            rate_tolerance=float(payload["rate_tolerance"]),
            rows=rows,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"published results file has wrong shape: {exc}") from exc


@dataclass(frozen=True)
class VerifiedRow:
    model: str
    n: int
    sum_ok: bool
    printed_r: float
    computed_r: float
    r_ok: bool
    printed_c: float
    computed_c: float
    c_ok: bool
    e_r: float | None
    e_c: float | None
    order_ok: bool
    note: str | None

    @property
    def ok(self) -> bool:
        return self.sum_ok and self.r_ok and self.c_ok and self.order_ok


@dataclass(frozen=True)
class VerificationReport:
    dataset_size: int
    rate_tolerance: float
    rows: tuple[VerifiedRow, ...]

    @property
    def ok(self) -> bool:
        return all(row.ok for row in self.rows)

    def render(self) -> str:
        def mark(flag: bool) -> str:
            return "ok" if flag else "FAIL"

        lines = [
            f"recomputing published rates from quadrant counts "
            f"(n={self.dataset_size}, tolerance {self.rate_tolerance})",
            "",
            f"{'model':<22} {'sum':>6} {'R printed':>10} {'R computed':>11} "
            f"{'C printed':>10} {'C computed':>11} {'E_r':>7} {'E_c':>7} {'E_r>E_c':>8}  verdict",
        ]
        for row in self.rows:
            verdict = mark(row.ok)
            if row.note:
                verdict += f"  ({row.note})"
            lines.append(
                f"{row.model:<22} {row.n:>4}{'' if row.sum_ok else '!':<2} "
                f"{format_rate(row.printed_r):>10} {format_rate(row.computed_r):>11} "
                f"{format_rate(row.printed_c):>10} {format_rate(row.computed_c):>11} "
                f"{format_rate(row.e_r):>7} {format_rate(row.e_c):>7} "
                f"{mark(row.order_ok):>8}  {verdict}"
            )
        lines.append("")
        lines.append(f"overall: {'all rows check out' if self.ok else 'FAIL'}")
        return "\n".join(lines)


def verify_published(path: str | Path | None = None) -> VerificationReport:
    """Recompute every published row from its quadrant counts and check
    row sums, both rates, and the e_r > e_c ordering."""
    table = load_published(path)
    verified = []
    for row in table.rows:
        counts = row.counts
        computed_r, computed_c = rates(counts)
        e_r, e_c = e_ratios(counts)
        verified.append(
            VerifiedRow(
                model=row.model,
                n=counts.n,
                sum_ok=counts.n == table.dataset_size,
                printed_r=row.r_rate,
                computed_r=computed_r,
                r_ok=abs(computed_r - row.r_rate) <= table.rate_tolerance,
                printed_c=row.c_rate,
                computed_c=computed_c,
                c_ok=abs(computed_c - row.c_rate) <= table.rate_tolerance,
                e_r=e_r,
                e_c=e_c,
                order_ok=e_r is not None and e_c is not None and e_r > e_c,
                note=row.note,
            )
        )
    return VerificationReport(
        dataset_size=table.dataset_size,
        rate_tolerance=table.rate_tolerance,
        rows=tuple(verified),
    )


def published_reports(path: str | Path | None = None) -> list[RateReport]:
    """RateReports recomputed from the published quadrant counts, for
    rendering through the normal report pipeline."""
    table = load_published(path)
    return [report_from_counts(row.counts, row.model) for row in table.rows]


def require_verified(path: str | Path | None = None) -> VerificationReport:
    report = verify_published(path)
    if not report.ok:
        raise VerificationError(
            "published results failed verification:\n" + report.render()
        )
    return report
