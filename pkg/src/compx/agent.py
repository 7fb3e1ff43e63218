"""The plan / execute / evaluate-refine state machine.

A session turns one instruction into a plan, derives numeric acceptance
windows, then loops: encode with the current quality factors, evaluate the
result against the windows, and propose new factors, for at most
MAX_ITERATIONS rounds. The default proposer is a deterministic bisection on a
scalar quality parameter; an LLM proposer is available and falls back to
bisection when its reply carries no usable proposal.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import codec as codec_mod
from . import container as container_mod
from . import llmclient, metrics, plan as plan_mod, prompts, segmenter
from .errors import (
    CompxError,
    EmptyHistory,
    InvariantViolation,
    LabelNotFound,
    NoProposalFound,
    NoWindow,
    PlanError,
    PlanningFailed,
    SegmentationRequired,
)
from .imaging import ImageBuffer, ensure_rgb, load_image, save_image

log = logging.getLogger(__name__)

MAX_ITERATIONS = 10
BYTE_WINDOW_SLACK = 256  # lower bound sits this far below a size cap
PERF_WINDOW_HALF_WIDTH = 0.25  # dB, for "about N dB" requests
ROI_Q_OFFSET = 0.2  # RoI/non-RoI quality gap used by the bisection proposer

SIZE_LEVEL_Q = {
    "minimum": 0.05,
    "small": 0.25,
    "medium": 0.5,
    "large": 0.75,
    "maximum": 0.95,
}

_PROPOSAL_RE = re.compile(
    r"q\s*=\s*\[\s*([0-9.eE+-]+)\s*,\s*([0-9.eE+-]+)\s*\]", re.IGNORECASE
)


@dataclass
class Constraints:
    byte_window: tuple[int, int] | None = None
    perf_window: tuple[float, float] | None = None
    gate_metric: plan_mod.MetricSpec = field(
        default_factory=lambda: plan_mod.MetricSpec("psnr")
    )
    gate_note: str = ""

    def __post_init__(self):
        for window in (self.byte_window, self.perf_window):
            if window is not None and window[0] > window[1]:
                raise InvariantViolation(f"window {window} has lo > hi")

    @property
    def refinable(self) -> bool:
        return self.byte_window is not None or self.perf_window is not None

    def to_json_dict(self) -> dict:
        return {
            "byte_window": list(self.byte_window) if self.byte_window else None,
            "perf_window": list(self.perf_window) if self.perf_window else None,
            "gate_metric": self.gate_metric.render(),
            "gate_note": self.gate_note,
        }


@dataclass
class Iteration:
    index: int
    q_factors: tuple[float, float]
    bytes: int
    metric_value: float
    note: str = ""
    verdict: str | None = None

    def __post_init__(self):
        if not 0 <= self.index < MAX_ITERATIONS:
            raise InvariantViolation(f"iteration index {self.index} out of range")

    def to_json_dict(self) -> dict:
        return {
            "index": self.index,
            "q_factors": list(self.q_factors),
            "bytes": self.bytes,
            "metric_value": metrics.format_db(self.metric_value),
            "note": self.note,
            "verdict": self.verdict,
        }


@dataclass
class SessionTrace:
    request: str
    plan: plan_mod.RequestPlan
    constraints: Constraints
    iterations: list[Iteration] = field(default_factory=list)
    outcome: str = "pending"  # pending -> accepted | best_effort | failed
    chosen_iteration: int | None = None
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.iterations) > MAX_ITERATIONS:
            raise InvariantViolation("trace exceeds the iteration cap")

    def to_json_dict(self) -> dict:
        return {
            "request": self.request,
            "plan": self.plan.to_json_dict(),
            "constraints": self.constraints.to_json_dict(),
            "iterations": [it.to_json_dict() for it in self.iterations],
            "outcome": self.outcome,
            "chosen_iteration": self.chosen_iteration,
            "warnings": self.warnings,
        }


class StageError(CompxError):
    """Wraps a typed stage failure together with the partial trace."""

    def __init__(self, stage: str, cause: Exception, trace: SessionTrace | None = None):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
        self.trace = trace


# --- planning ----------------------------------------------------------------

def plan_stage(instruction: str, mode: str = "rules",
               bundle: prompts.PromptBundle | None = None,
               config: llmclient.ChatConfig | None = None,
               transport=None,
               warnings: list[str] | None = None) -> plan_mod.RequestPlan:
    """Produce a normalized plan via the rule planner, an LLM, or LLM with
    rule fallback on parse/validation errors."""
    if mode == "rules":
        return plan_mod.rule_parse(instruction)
    if mode not in ("llm", "llm_with_fallback"):
        raise ValueError(f"unknown planner mode {mode!r}")
    bundle = bundle or prompts.load_store()
    config = config or llmclient.ChatConfig.from_env()
    if transport is None:
        transport = llmclient.LiveTransport()
    messages = prompts.build_planning_messages(bundle, instruction)
    text = llmclient.chat_complete(messages, config, transport)
    try:
        return plan_mod.normalize(plan_mod.parse_plan_text(text))
    except (PlanError, InvariantViolation) as exc:
        if mode == "llm_with_fallback":
            message = f"planner output rejected ({exc}); fell back to rule planner"
            log.warning(message)
            if warnings is not None:
                warnings.append(message)
            return plan_mod.rule_parse(instruction)
        raise PlanningFailed(f"could not parse planner output: {exc}") from exc


def derive_constraints(plan: plan_mod.RequestPlan) -> Constraints:
    """Numeric acceptance windows plus the metric that gates refinement."""
    byte_window = None
    unit = plan.bitrate_unit or "B"
    if plan.bitrate_min is not None and plan.bitrate_max is not None:
        byte_window = (plan_mod.size_to_bytes(plan.bitrate_min, unit),
                       plan_mod.size_to_bytes(plan.bitrate_max, unit))
    elif plan.bitrate_max is not None:
        hi = plan_mod.size_to_bytes(plan.bitrate_max, unit)
        byte_window = (hi - BYTE_WINDOW_SLACK, hi)
    elif plan.bitrate_min is not None:
        lo = plan_mod.size_to_bytes(plan.bitrate_min, unit)
        byte_window = (lo, lo + BYTE_WINDOW_SLACK)

    perf_window = None
    bounds = [b for b in (plan.performance_min, plan.performance_max) if b is not None]
    if plan.performance_min is not None and plan.performance_max is not None:
        perf_window = (plan.performance_min, plan.performance_max)
    elif len(bounds) == 1:
        target = bounds[0]
        perf_window = (target - PERF_WINDOW_HALF_WIDTH, target + PERF_WINDOW_HALF_WIDTH)

    gate = None
    note = ""
    for spec in plan.performance_metric:
        if spec.kind in ("psnr", "weighted_psnr"):
            gate = spec
            break
    if gate is None:
        first = plan.performance_metric[0].kind if plan.performance_metric else "psnr"
        gate = plan_mod.MetricSpec("psnr")
        if first != "psnr":
            note = f"PSNR proxies the {first!r} metric for loop gating"
    return Constraints(byte_window=byte_window, perf_window=perf_window,
                       gate_metric=gate, gate_note=note)


def initial_q(plan: plan_mod.RequestPlan) -> tuple[float, float]:
    q = SIZE_LEVEL_Q[plan.encoded_size_level]
    return (q, q)


# --- execution ----------------------------------------------------------------

@dataclass
class ExecResult:
    bytes: int
    metric_value: float
    note: str = ""
    container: container_mod.Container | None = None
    recon: ImageBuffer | None = None


def transmitted_groups(plan: plan_mod.RequestPlan,
                       mask: codec_mod.GroupMask) -> set[int] | None:
    """Group ids selected by the plan's transmission field; None means all."""
    wanted = plan.objects_to_transmit.strip().lower()
    if wanted in ("", "all"):
        return None
    if wanted == "foreground":
        return set(range(1, mask.group_count))
    if wanted == "background":
        return {0}
    groups: set[int] = set()
    for part in wanted.split(","):
        ids = mask.groups_for_label(part)
        if not ids:
            raise LabelNotFound(f"mask has no group labeled {part.strip()!r}")
        groups.update(ids)
    return groups


class CodecExecutor:
    """Real execution backend: quality map -> encode -> extract -> decode."""

    def __init__(self, plan: plan_mod.RequestPlan, image: ImageBuffer,
                 mask: codec_mod.GroupMask | None, constraints: Constraints):
        self.plan = plan
        self.image = image
        self.reference = ensure_rgb(image)
        needs_mask = plan.roi_coding or plan.objects_to_transmit != "all"
        if needs_mask and mask is None:
            raise SegmentationRequired(
                "the plan needs a group mask but none was provided"
            )
        self.mask = mask if mask is not None else codec_mod.GroupMask.single_group(
            image.width, image.height
        )
        self.profile = codec_mod.TaskProfile.for_kind(plan.compression_mode)
        self.groups = transmitted_groups(plan, self.mask)
        self.gate = constraints.gate_metric
        if self.gate.kind == "weighted_psnr":
            self.roi = self._roi_pixels()
            self.weights = metrics.RoiWeights(self.gate.roi_ratio, self.gate.nonroi_ratio)
        else:
            self.roi = None
            self.weights = None

    def _roi_pixels(self) -> np.ndarray:
        if self.plan.roi_object:
            ids = self.mask.groups_for_label(self.plan.roi_object)
            if ids:
                return np.isin(self.mask.ids, ids).astype(np.uint8)
        return (self.mask.ids != 0).astype(np.uint8)

    def quality_map(self, q_factors: tuple[float, float]) -> codec_mod.QualityMap:
        q_roi, q_bg = (min(1.0, max(0.0, q)) for q in q_factors)
        if self.plan.roi_coding:
            values = np.where(self.mask.ids != 0, np.float32(q_roi), np.float32(q_bg))
        else:
            values = np.full((self.image.height, self.image.width),
                             np.float32(q_roi), dtype=np.float32)
        return codec_mod.QualityMap(self.image.width, self.image.height, values)

    def __call__(self, q_factors: tuple[float, float]) -> ExecResult:
        full = codec_mod.encode(self.image, self.quality_map(q_factors),
                                self.mask, self.profile)
        sub = container_mod.extract(full, self.groups) if self.groups else full
        stream = container_mod.serialize(sub)
        recon = codec_mod.decode(sub, self.groups if self.groups else codec_mod.ALL)
        if self.weights is not None:
            value = metrics.weighted_psnr(self.reference, recon, self.roi, self.weights)
        else:
            value = metrics.psnr(self.reference, recon)
        return ExecResult(bytes=len(stream), metric_value=value,
                          container=sub, recon=recon)


class ReplayExecutor:
    """Replays recorded (bytes, performance) pairs; for fixtures and tests."""

    def __init__(self, records: list[dict]):
        self._records = list(records)
        self._cursor = 0

    def __call__(self, q_factors: tuple[float, float]) -> ExecResult:
        if self._cursor >= len(self._records):
            raise CompxError("replay executor ran out of recorded iterations")
        rec = self._records[self._cursor]
        self._cursor += 1
        return ExecResult(bytes=int(rec["bytes"]),
                          metric_value=float(rec["performance"]),
                          note="replayed recorded execution")


def execute_stage(plan: plan_mod.RequestPlan, q_factors: tuple[float, float],
                  executor, index: int) -> Iteration:
    result = executor(q_factors)
    return Iteration(index=index, q_factors=tuple(q_factors), bytes=result.bytes,
                     metric_value=result.metric_value, note=result.note)


# --- refinement ---------------------------------------------------------------

def _scalar_of(q_factors) -> float:
    return (q_factors[0] + q_factors[1]) / 2.0


def propose_next(history: list[Iteration], constraints: Constraints) -> tuple[float, float]:
    """Bisection on a scalar quality parameter toward the active window.

    The pair is parametrized as (s + d/2, s - d/2) with a fixed RoI offset d
    when the gate metric is a weighted PSNR, making the search one-dimensional.
    """
    if not history:
        raise EmptyHistory("refinement needs at least one executed iteration")
    if not constraints.refinable:
        raise NoWindow("no byte or performance window to refine toward")
    use_bytes = constraints.byte_window is not None
    lo_t, hi_t = constraints.byte_window if use_bytes else constraints.perf_window
    s_lo, s_hi = 0.0, 1.0
    for it in history:
        s = _scalar_of(it.q_factors)
        value = it.bytes if use_bytes else it.metric_value
        if value < lo_t:
            s_lo = max(s_lo, s)
        elif value > hi_t:
            s_hi = min(s_hi, s)
    s = (s_lo + s_hi) / 2.0
    delta = ROI_Q_OFFSET if constraints.gate_metric.kind == "weighted_psnr" else 0.0
    return (min(1.0, max(0.0, s + delta / 2)), min(1.0, max(0.0, s - delta / 2)))


def llm_propose(history: list[Iteration], constraints: Constraints,
                bundle: prompts.PromptBundle, config: llmclient.ChatConfig,
                transport) -> tuple[float, float]:
    """Ask the model for new q factors; parse the last ``q= [a, b]`` pattern."""
    messages = prompts.build_refinement_messages(bundle, None, constraints, history)
    text = llmclient.chat_complete(messages, config, transport)
    matches = _PROPOSAL_RE.findall(text)
    if not matches:
        raise NoProposalFound("refinement reply carries no q proposal")
    a, b = (float(v) for v in matches[-1])
    return (min(1.0, max(0.0, a)), min(1.0, max(0.0, b)))


def evaluate_iteration(iteration: Iteration, constraints: Constraints,
                       max_iterations: int = MAX_ITERATIONS) -> str:
    """accept | continue | stop_best_effort."""
    ok = True
    if constraints.byte_window is not None:
        lo, hi = constraints.byte_window
        ok = ok and lo <= iteration.bytes <= hi
    if constraints.perf_window is not None:
        lo, hi = constraints.perf_window
        ok = ok and lo <= iteration.metric_value <= hi
    if ok:
        return "accept"
    if iteration.index >= max_iterations - 1:
        return "stop_best_effort"
    return "continue"


def _window_distance(value: float, window: tuple[float, float]) -> float:
    lo, hi = window
    return max(lo - value, value - hi, 0.0)


def select_best_effort(iterations: list[Iteration], constraints: Constraints) -> int:
    """Pick the fallback iteration when the loop hits the cap unsatisfied.

    With a byte window: among byte-feasible iterations the one with the best
    gate metric; if none is byte-feasible, the one with bytes closest to the
    window. With only a performance window: metric closest to the window.
    """
    if constraints.byte_window is not None:
        lo, hi = constraints.byte_window
        feasible = [it for it in iterations if lo <= it.bytes <= hi]
        if feasible:
            return max(feasible, key=lambda it: (it.metric_value, -it.index)).index
        return min(iterations,
                   key=lambda it: (_window_distance(it.bytes, constraints.byte_window),
                                   it.index)).index
    if constraints.perf_window is not None:
        return min(iterations,
                   key=lambda it: (_window_distance(it.metric_value,
                                                    constraints.perf_window),
                                   it.index)).index
    return iterations[-1].index


# --- session orchestration -----------------------------------------------------

@dataclass
class SessionDeps:
    """Everything run_session needs beyond the instruction itself."""

    image: ImageBuffer | None = None
    image_path: str | Path | None = None
    planner: str = "rules"
    proposer: str = "bisection"  # bisection | llm
    bundle: prompts.PromptBundle | None = None
    chat_config: llmclient.ChatConfig | None = None
    transport: object | None = None
    mask: codec_mod.GroupMask | None = None
    mask_source: segmenter.MaskSource | None = None
    auto_segment: bool = True
    executor: object | None = None
    out_dir: str | Path | None = None
    max_iterations: int = MAX_ITERATIONS


def _resolve_image(deps: SessionDeps) -> ImageBuffer | None:
    if deps.image is not None:
        return deps.image
    if deps.image_path is not None:
        return load_image(deps.image_path)
    return None


def _resolve_mask(deps: SessionDeps, plan: plan_mod.RequestPlan,
                  image: ImageBuffer | None) -> codec_mod.GroupMask | None:
    needs_mask = plan.roi_coding or plan.objects_to_transmit != "all"
    if not needs_mask:
        return deps.mask
    if deps.mask is not None:
        return deps.mask
    if deps.mask_source is not None and image is not None:
        return segmenter.resolve_mask(deps.mask_source, image, plan.roi_object)
    if deps.auto_segment and image is not None:
        return segmenter.heuristic_foreground(image)
    raise SegmentationRequired("no mask available and automatic segmentation is off")


def _persist(trace: SessionTrace, deps: SessionDeps,
             mask: codec_mod.GroupMask | None,
             artifacts: dict[int, ExecResult]) -> None:
    if deps.out_dir is None:
        return
    out = Path(deps.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "plan.json").write_text(trace.plan.to_json_text())
    (out / "constraints.json").write_text(
        json.dumps(trace.constraints.to_json_dict(), indent=2))
    (out / "trace.json").write_text(json.dumps(trace.to_json_dict(), indent=2))
    if mask is not None:
        view = np.zeros((mask.height, mask.width, 1), dtype=np.uint8)
        denom = max(mask.group_count - 1, 1)
        view[:, :, 0] = (mask.ids.astype(np.float64) / denom * 255).astype(np.uint8)
        save_image(ImageBuffer.from_array(view), out / "mask.png")
    for index, result in artifacts.items():
        it_dir = out / f"iter_{index}"
        it_dir.mkdir(exist_ok=True)
        if result.recon is not None:
            save_image(result.recon, it_dir / "recon.png")
        if result.container is not None:
            (it_dir / "stream.ssbx").write_bytes(
                container_mod.serialize(result.container))


def run_session(instruction: str, deps: SessionDeps,
                on_stage=None, trace_sink=None) -> SessionTrace:
    """Run the full pipeline; returns the completed trace.

    ``on_stage`` (stage name) and ``trace_sink`` (the live trace object, sent
    once after planning) let the HTTP service publish progress.
    """
    def stage(name):
        if on_stage:
            on_stage(name)

    warnings: list[str] = []
    stage("planning")
    try:
        the_plan = plan_stage(instruction, deps.planner, deps.bundle,
                              deps.chat_config, deps.transport, warnings)
    except CompxError as exc:
        raise StageError("planning", exc) from exc

    constraints = derive_constraints(the_plan)
    if constraints.gate_note:
        warnings.append(constraints.gate_note)
    trace = SessionTrace(request=instruction, plan=the_plan, constraints=constraints,
                         warnings=warnings)
    if trace_sink:
        trace_sink(trace)

    stage("pre_analysis")
    image = _resolve_image(deps)
    mask = None
    try:
        if deps.executor is None:
            mask = _resolve_mask(deps, the_plan, image)
    except CompxError as exc:
        raise StageError("pre_analysis", exc, trace) from exc

    if deps.executor is not None:
        executor = deps.executor
    else:
        if image is None:
            raise StageError("pre_analysis",
                             SegmentationRequired("no image supplied"), trace)
        try:
            executor = CodecExecutor(the_plan, image, mask, constraints)
        except CompxError as exc:
            raise StageError("pre_analysis", exc, trace) from exc

    artifacts: dict[int, ExecResult] = {}
    q = initial_q(the_plan)
    for index in range(deps.max_iterations):
        stage("encoding" if index == 0 else "refining")
        try:
            result = executor(q)
        except CompxError as exc:
            raise StageError("encoding", exc, trace) from exc
        iteration = Iteration(index=index, q_factors=tuple(q), bytes=result.bytes,
                              metric_value=result.metric_value, note=result.note)
        artifacts[index] = result
        if index == 0:
            stage("evaluating")
        verdict = ("accept" if not constraints.refinable
                   else evaluate_iteration(iteration, constraints,
                                           deps.max_iterations))
        iteration.verdict = verdict
        trace.iterations.append(iteration)
        if verdict == "accept":
            trace.outcome = "accepted"
            trace.chosen_iteration = index
            break
        if verdict == "stop_best_effort":
            trace.outcome = "best_effort"
            trace.chosen_iteration = select_best_effort(trace.iterations, constraints)
            break
        # propose the next quality factors
        if deps.proposer == "llm":
            bundle = deps.bundle or prompts.load_store()
            config = deps.chat_config or llmclient.ChatConfig.from_env()
            try:
                q = llm_propose(trace.iterations, constraints, bundle, config,
                                deps.transport or llmclient.LiveTransport())
            except NoProposalFound as exc:
                warnings.append(f"{exc}; fell back to bisection")
                q = propose_next(trace.iterations, constraints)
            except CompxError as exc:
                raise StageError("refining", exc, trace) from exc
        else:
            q = propose_next(trace.iterations, constraints)

    assert len(trace.iterations) <= MAX_ITERATIONS
    _persist(trace, deps, mask, artifacts)
    return trace


# --- bundled fixtures -----------------------------------------------------------

def load_fixture(name: str) -> dict:
    """Load a bundled replay fixture (e.g. "appendix_d")."""
    path = Path(resources.files("compx") / "data" / "fixtures" / f"{name}.json")
    if not path.is_file():
        raise CompxError(f"unknown fixture {name!r}")
    return json.loads(path.read_text())


def fixture_deps(name: str, **overrides) -> tuple[str, SessionDeps]:
    """Instruction plus SessionDeps wired with the fixture's scripted
    transport and replay executor."""
    fixture = load_fixture(name)
    deps = SessionDeps(
        planner="llm",
        proposer="llm",
        transport=llmclient.ScriptedTransport(fixture["assistant_texts"]),
        executor=ReplayExecutor(fixture["iterations"]),
        chat_config=llmclient.ChatConfig(api_key="scripted"),
    )
    for key, value in overrides.items():
        setattr(deps, key, value)
    return fixture["instruction"], deps
