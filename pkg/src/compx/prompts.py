"""Prompt store and message assembly for planning and refinement.

The store is a directory with ``planning_system.txt``, ``refinement_system.txt``
and ``transcripts/*.json``. Transcripts are expert-reviewed planning dialogues
(in-context examples with corrections); they ship as data so users can extend
the store without touching code.

Chat APIs have no "expert" role, so expert turns are emitted as user messages
with a fixed "Expert feedback: " prefix.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import plan as plan_mod
from .errors import EmptyHistory, InvalidTranscript, MissingFile, PlanError

EXPERT_PREFIX = "Expert feedback: "
_SPEAKER_ROLE = {"user_request": "user", "agent": "assistant", "expert": "user"}


@dataclass
class PromptMessage:
    role: str  # system | user | assistant
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"bad message role {self.role!r}")
        if not self.content:
            raise ValueError("message content must be nonempty")

    def as_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass
class ExpertTranscript:
    id: str
    turns: list[dict]
    final_plan: str

    def validate(self) -> None:
        speakers = [t.get("speaker") for t in self.turns]
        if any(s not in _SPEAKER_ROLE for s in speakers):
            raise InvalidTranscript(f"{self.id}: unknown speaker in turns")
        if "expert" not in speakers:
            raise InvalidTranscript(f"{self.id}: transcript has no expert turn")
        agent_turns = [t for t in self.turns if t["speaker"] == "agent"]
        if not agent_turns:
            raise InvalidTranscript(f"{self.id}: transcript has no agent turn")
        try:
            final = plan_mod.normalize(plan_mod.parse_plan_text(self.final_plan))
            last = plan_mod.normalize(plan_mod.parse_plan_text(agent_turns[-1]["content"]))
        except PlanError as exc:
            raise InvalidTranscript(f"{self.id}: {exc}") from exc
        if final != last:
            raise InvalidTranscript(
                f"{self.id}: last agent turn does not match final_plan"
            )


@dataclass
class PromptBundle:
    planning_system: str
    refinement_system: str
    transcripts: list[ExpertTranscript] = field(default_factory=list)

    def __post_init__(self):
        if not self.planning_system.strip():
            raise ValueError("planning system prompt must be nonempty")


def default_store_path() -> Path:
    return Path(resources.files("compx") / "data" / "prompts")


def load_store(directory=None) -> PromptBundle:
    """Load and validate a prompt store directory (default: bundled store)."""
    root = Path(directory) if directory is not None else default_store_path()
    planning = root / "planning_system.txt"
    refinement = root / "refinement_system.txt"
    for path in (planning, refinement):
        if not path.is_file():
            raise MissingFile(f"prompt store is missing {path.name}")
    transcripts = []
    tdir = root / "transcripts"
    if tdir.is_dir():
        for path in sorted(tdir.glob("*.json")):
            try:
                raw = json.loads(path.read_text())
                transcript = ExpertTranscript(
                    id=str(raw["id"]),
                    turns=list(raw["turns"]),
                    final_plan=str(raw["final_plan"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise InvalidTranscript(f"{path.name}: {exc}") from exc
            transcript.validate()
            transcripts.append(transcript)
    return PromptBundle(
        planning_system=planning.read_text(),
        refinement_system=refinement.read_text(),
        transcripts=transcripts,
    )


def build_planning_messages(bundle: PromptBundle, instruction: str) -> list[PromptMessage]:
    """System prompt, then each transcript as in-context turns, then the request."""
    messages = [PromptMessage("system", bundle.planning_system)]
    for transcript in bundle.transcripts:
        for turn in transcript.turns:
            role = _SPEAKER_ROLE[turn["speaker"]]
            content = turn["content"]
            if turn["speaker"] == "expert":
                content = EXPERT_PREFIX + content
            messages.append(PromptMessage(role, content))
    messages.append(PromptMessage("user", instruction))
    return messages


def _fmt_q(value: float) -> str:
    return f"{value:g}"


def _fmt_metric(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.4f}"


def history_line(iteration) -> str:
    q0, q1 = iteration.q_factors
    return (
        f"iteration {iteration.index}, q_factor: [{_fmt_q(q0)}, {_fmt_q(q1)}], "
        f"bytes: {iteration.bytes}, performance: {_fmt_metric(iteration.metric_value)}"
    )


def render_requirement(constraints) -> str:
    lines = []
    if constraints.byte_window is not None:
        lo, hi = constraints.byte_window
        lines.append(f"The encoded size must fall in the range of {lo} to {hi} bytes.")
    if constraints.perf_window is not None:
        lo, hi = constraints.perf_window
        name = constraints.gate_metric.render() if constraints.gate_metric else "metric"
        lines.append(f"The {name} must fall between {lo:g} and {hi:g} dB.")
    if not lines:
        lines.append("No numeric constraint; aim for the preset size level.")
    return "\n".join(lines)


def build_refinement_messages(bundle: PromptBundle, plan, constraints,
                              history) -> list[PromptMessage]:
    """System prompt plus one user message with requirement and history table."""
    if not history:
        raise EmptyHistory("refinement needs at least one executed iteration")
    body = [
        "User requirement:",
        render_requirement(constraints),
        "",
        "history result:",
    ]
    body.extend(history_line(it) for it in history)
    body.append("")
    body.append(
        "Decide whether the latest iteration satisfies the requirement. "
        "If it does not, suggest new q values as: q= [a, b]"
    )
    return [
        PromptMessage("system", bundle.refinement_system),
        PromptMessage("user", "\n".join(body)),
    ]
