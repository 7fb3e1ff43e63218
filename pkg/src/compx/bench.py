"""Benchmark harness: planning success rates and rate-distortion sweeps.

Suites are JSONL, one item per line:
{"id": ..., "difficulty": "simple"|"hard", "instruction": ..., "label": {...}}
with labels in the plan interchange key format. The bundled 12-item mini
suite lives in the package data; see demos/make_suite.py for authoring.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import agent, codec, container, metrics, plan as plan_mod
from .errors import (
    BadDifficulty,
    CompxError,
    CurveNonMonotone,
    DegenerateCurve,
    DuplicateId,
    IoError,
    LabelParseError,
)
from .imaging import ImageBuffer, ensure_rgb

DIFFICULTIES = ("simple", "hard")


@dataclass
class BenchItem:
    id: str
    difficulty: str
    instruction: str
    gold: plan_mod.GoldLabel


@dataclass
class BenchReport:
    summary: plan_mod.SuccessReport
    repeats: int
    item_results: list[tuple[str, str, list[bool]]]  # (id, difficulty, runs)
    failures: list[tuple[str, list[str]]] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "repeats": self.repeats,
            "simple_pct": round(self.summary.simple_pct, 2),
            "hard_pct": round(self.summary.hard_pct, 2),
            "all_pct": round(self.summary.all_pct, 2),
            "n_simple": self.summary.n_simple,
            "n_hard": self.summary.n_hard,
            "items": [
                {"id": item_id, "difficulty": difficulty,
                 "successes": sum(runs), "runs": len(runs)}
                for item_id, difficulty, runs in self.item_results
            ],
            "failures": [
                {"id": item_id, "fields": fields} for item_id, fields in self.failures
            ],
        }


def default_suite_path() -> Path:
    return Path(resources.files("compx") / "data" / "bench" / "mini_suite.jsonl")


def load_suite(path=None) -> list[BenchItem]:
    """Parse and validate a JSONL suite; gold labels are normalized."""
    suite_path = Path(path) if path is not None else default_suite_path()
    items: list[BenchItem] = []
    seen: set[str] = set()
    for lineno, line in enumerate(suite_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            item_id = str(raw["id"])
            difficulty = str(raw["difficulty"])
            instruction = str(raw["instruction"])
            gold = plan_mod.normalize(plan_mod.parse_plan_text(json.dumps(raw["label"])))
        except (json.JSONDecodeError, KeyError, TypeError, CompxError) as exc:
            raise LabelParseError(f"{suite_path}:{lineno}: {exc}") from exc
        if difficulty not in DIFFICULTIES:
            raise BadDifficulty(f"{suite_path}:{lineno}: difficulty {difficulty!r}")
        if item_id in seen:
            raise DuplicateId(f"{suite_path}:{lineno}: duplicate item id {item_id!r}")
        seen.add(item_id)
        items.append(BenchItem(id=item_id, difficulty=difficulty,
                               instruction=instruction, gold=gold))
    return items


def write_suite(items: list[dict], path) -> None:
    """Write suite items (dicts with id/difficulty/instruction/label) as JSONL."""
    with open(path, "w") as f:
        for item in items:
            f.write(json.dumps(item) + "\n")


def run_success_eval(planner_mode: str, suite: list[BenchItem], repeats: int = 3,
                     bundle=None, config=None, transport=None) -> BenchReport:
    """Plan every item ``repeats`` times and score against the gold labels.

    Planning errors count as item failures, never abort the run.
    """
    item_results = []
    failures: list[tuple[str, list[str]]] = []
    for item in suite:
        runs: list[bool] = []
        for _ in range(repeats):
            try:
                predicted = agent.plan_stage(item.instruction, planner_mode,
                                             bundle, config, transport)
                report = plan_mod.score(predicted, item.gold)
                runs.append(report.success)
                if not report.success:
                    failures.append((item.id, report.failed_fields))
            except CompxError as exc:
                runs.append(False)
                failures.append((item.id, [f"planning error: {exc.code}"]))
        item_results.append((item.id, item.difficulty, runs))
    summary = plan_mod.aggregate(
        [(difficulty, runs) for _, difficulty, runs in item_results], repeats
    )
    return BenchReport(summary=summary, repeats=repeats,
                       item_results=item_results, failures=failures)


def rd_sweep(images: dict[str, ImageBuffer], q_grid: list[float],
             profile: codec.TaskProfile | None = None) -> dict[str, metrics.RdCurve]:
    """Encode each image over a grid of uniform qualities; one RD curve each."""
    if len(q_grid) < 4 or any(b <= a for a, b in zip(q_grid, q_grid[1:])):
        raise CurveNonMonotone("q grid must be strictly increasing with >= 4 points")
    profile = profile or codec.TaskProfile.for_kind("distortion")
    curves: dict[str, metrics.RdCurve] = {}
    for name, image in images.items():
        mask = codec.GroupMask.single_group(image.width, image.height)
        points = []
        for q in q_grid:
            qmap = codec.QualityMap.uniform(image.width, image.height, q)
            stream = container.serialize(codec.encode(image, qmap, mask, profile))
            recon = codec.decode(container.parse(stream))
            points.append(metrics.RdPoint(
                bpp=metrics.container_bpp(stream, image.width, image.height),
                metric=metrics.psnr(ensure_rgb(image), recon),
            ))
        try:
            curves[name] = metrics.RdCurve(points)
        except DegenerateCurve as exc:
            offending = [(round(p.bpp, 6), round(p.metric, 4)) for p in points]
            raise CurveNonMonotone(f"{name}: {exc}; points={offending}") from exc
    return curves


def _require_format(fmt: str) -> None:
    if fmt not in ("csv", "markdown", "json"):
        raise ValueError(f"unknown report format {fmt!r}")


def render_bench_report(report: BenchReport, fmt: str) -> str:
    _require_format(fmt)
    if fmt == "json":
        return json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"
    if fmt == "markdown":
        lines = [
            "| Simple (%) | Hard (%) | All (%) |",
            "| --- | --- | --- |",
            f"| {report.summary.simple_pct:.2f} | {report.summary.hard_pct:.2f} "
            f"| {report.summary.all_pct:.2f} |",
            "",
            "| item | difficulty | successes | runs |",
            "| --- | --- | --- | --- |",
        ]
        for item_id, difficulty, runs in report.item_results:
            lines.append(f"| {item_id} | {difficulty} | {sum(runs)} | {len(runs)} |")
        return "\n".join(lines) + "\n"
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["item", "difficulty", "successes", "runs"])
    for item_id, difficulty, runs in report.item_results:
        writer.writerow([item_id, difficulty, sum(runs), len(runs)])
    writer.writerow([])
    writer.writerow(["simple_pct", "hard_pct", "all_pct"])
    writer.writerow([f"{report.summary.simple_pct:.2f}",
                     f"{report.summary.hard_pct:.2f}",
                     f"{report.summary.all_pct:.2f}"])
    return out.getvalue()


def render_curves(curves: dict[str, metrics.RdCurve], q_grid: list[float],
                  fmt: str) -> str:
    _require_format(fmt)
    if fmt == "json":
        doc = {
            name: [{"q": q, "bpp": p.bpp, "psnr": metrics.format_db(p.metric)}
                   for q, p in zip(q_grid, curve.points)]
            for name, curve in sorted(curves.items())
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if fmt == "markdown":
        lines = ["| image | q | bpp | psnr |", "| --- | --- | --- | --- |"]
        for name in sorted(curves):
            for q, p in zip(q_grid, curves[name].points):
                lines.append(f"| {name} | {q:g} | {p.bpp:.6f} | "
                             f"{metrics.format_db(p.metric)} |")
        return "\n".join(lines) + "\n"
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["image", "q", "bpp", "psnr"])
    for name in sorted(curves):
        for q, p in zip(q_grid, curves[name].points):
            writer.writerow([name, f"{q:g}", f"{p.bpp:.6f}", metrics.format_db(p.metric)])
    return out.getvalue()


def write_report(payload, path, fmt: str = "csv", q_grid: list[float] | None = None) -> None:
    """Serialize a BenchReport or RD-curve map to disk, deterministically."""
    if isinstance(payload, BenchReport):
        text = render_bench_report(payload, fmt)
    else:
        text = render_curves(payload, q_grid or [], fmt)
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write report to {path}: {exc}") from exc
