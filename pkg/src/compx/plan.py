"""The compression-plan schema: parsing model output, validation, a
deterministic rule-based planner, and gold-label scoring.

Plans serialize to a JSON object with the interchange key names
("RoI_coding", "Object_needed_to_be_transmitted", ...) used by the planning
prompts and benchmark files. Byte units are SI: KB = 1000 B, MB = 1000000 B.
"""

from __future__ import annotations

import ast
import json
import logging
import re
from dataclasses import dataclass, field, replace

from .errors import (
    InvalidEnum,
    InvariantViolation,
    MissingRuns,
    NoJsonFound,
    NonPositive,
    RatioSumViolation,
    UnknownField,
)

log = logging.getLogger(__name__)

COMPRESSION_MODES = (
    "distortion",
    "perception",
    "classification",
    "segmentation",
    "detection",
    "pose_estimation",
)
MACHINE_MODES = ("classification", "segmentation", "detection", "pose_estimation")
SIZE_LEVELS = ("minimum", "small", "medium", "large", "maximum")
BYTE_UNITS = {"B": 1, "KB": 1_000, "MB": 1_000_000}

METRIC_KINDS = COMPRESSION_MODES + ("psnr", "weighted_psnr")

# canonical interchange key per internal field name
_JSON_KEYS = {
    "file_path": "file_path",
    "compression_mode": "compression_mode",
    "roi_coding": "RoI_coding",
    "roi_object": "RoI_object",
    "objects_to_transmit": "Object_needed_to_be_transmitted",
    "encoded_size_level": "encoded_size_level",
    "specific_performance_limit": "specific_performance_limit",
    "specific_bitrate_limit": "specific_bitrate_limit",
    "performance_metric": "performance_metric",
    "bitrate_min": "bitrate_min",
    "bitrate_max": "bitrate_max",
    "bitrate_unit": "bitrate_unit",
    "performance_min": "performance_min",
    "performance_max": "performance_max",
}
_FIELD_BY_LOWER_KEY = {v.lower(): k for k, v in _JSON_KEYS.items()}

# object labels treated as equal when scoring
_SYNONYMS = {
    "human": "person",
    "people": "person",
    "persons": "person",
    "automobile": "car",
    "vehicles": "vehicle",
}


@dataclass
class MetricSpec:
    kind: str
    roi_ratio: float | None = None
    nonroi_ratio: float | None = None

    def __post_init__(self):
        kind = self.kind.strip().lower().replace(" ", "_")
        if kind not in METRIC_KINDS:
            raise InvalidEnum(f"unknown metric kind {self.kind!r}")
        self.kind = kind
        if kind == "weighted_psnr":
            if self.roi_ratio is None or self.nonroi_ratio is None:
                self.roi_ratio, self.nonroi_ratio = 0.8, 0.2
            if self.roi_ratio < 0 or self.nonroi_ratio < 0:
                raise RatioSumViolation("ratios must be nonnegative")
            if abs(self.roi_ratio + self.nonroi_ratio - 1.0) > 1e-6:
                raise RatioSumViolation(
                    f"ratios must sum to 1, got {self.roi_ratio} + {self.nonroi_ratio}"
                )
        else:
            self.roi_ratio = None
            self.nonroi_ratio = None

    @classmethod
    def parse(cls, text: str) -> "MetricSpec":
        text = str(text).strip()
        m = re.fullmatch(
            r"weighted_?psnr\s*\(\s*([0-9.eE+-]+)\s*,\s*([0-9.eE+-]+)\s*\)",
            text,
            re.IGNORECASE,
        )
        if m:
            return cls("weighted_psnr", float(m.group(1)), float(m.group(2)))
        if text.lower().replace(" ", "_") in ("weighted_psnr",):
            return cls("weighted_psnr")
        return cls(text)

    def render(self) -> str:
        if self.kind == "weighted_psnr":
            return f"weighted_PSNR({self.roi_ratio:g}, {self.nonroi_ratio:g})"
        if self.kind == "psnr":
            return "PSNR"
        return self.kind

    def matches(self, other: "MetricSpec") -> bool:
        if self.kind != other.kind:
            return False
        if self.kind == "weighted_psnr":
            return (
                abs(self.roi_ratio - other.roi_ratio) <= 1e-6
                and abs(self.nonroi_ratio - other.nonroi_ratio) <= 1e-6
            )
        return True


@dataclass
class RequestPlan:
    file_path: str = ""
    compression_mode: str = "distortion"
    roi_coding: bool = False
    roi_object: str | None = None
    objects_to_transmit: str = "all"
    encoded_size_level: str = "medium"
    specific_performance_limit: bool = False
    specific_bitrate_limit: bool = False
    performance_metric: list[MetricSpec] = field(default_factory=list)
    bitrate_min: float | None = None
    bitrate_max: float | None = None
    bitrate_unit: str | None = None
    performance_min: float | None = None
    performance_max: float | None = None

    def to_json_dict(self) -> dict:
        metric: object
        if len(self.performance_metric) == 1:
            metric = self.performance_metric[0].render()
        else:
            metric = [m.render() for m in self.performance_metric]
        return {
            "file_path": self.file_path,
            "compression_mode": self.compression_mode.replace("_", " ")
            if self.compression_mode == "pose_estimation"
            else self.compression_mode,
            "RoI_coding": self.roi_coding,
            "RoI_object": self.roi_object,
            "Object_needed_to_be_transmitted": self.objects_to_transmit,
            "encoded_size_level": self.encoded_size_level,
            "specific_performance_limit": self.specific_performance_limit,
            "specific_bitrate_limit": self.specific_bitrate_limit,
            "performance_metric": metric,
            "bitrate_min": self.bitrate_min,
            "bitrate_max": self.bitrate_max,
            "bitrate_unit": self.bitrate_unit,
            "performance_min": self.performance_min,
            "performance_max": self.performance_max,
        }

    def to_json_text(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


GoldLabel = RequestPlan


@dataclass
class FieldReport:
    flags: dict[str, bool]
    success: bool

    @property
    def failed_fields(self) -> list[str]:
        return [name for name, ok in self.flags.items() if not ok]


@dataclass
class SuccessReport:
    simple_pct: float
    hard_pct: float
    all_pct: float
    n_simple: int
    n_hard: int
    item_rates: list[tuple[str, float]]


def _strip_fences(text: str) -> str:
    return re.sub(r"```[a-zA-Z]*", "", text).replace("```", "")


def _outermost_object(text: str) -> str:
    start = text.find("{")
    if start < 0:
        raise NoJsonFound("no JSON object in text")
    depth = 0
    in_str: str | None = None
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_str:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == in_str:
                in_str = None
            continue
        if ch in "'\"":
            in_str = ch
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    raise NoJsonFound("unbalanced braces in text")


def _load_object(text: str) -> dict:
    candidate = _outermost_object(_strip_fences(text))
    try:
        obj = json.loads(candidate)
    except json.JSONDecodeError:
        try:
            obj = ast.literal_eval(candidate)
        except (ValueError, SyntaxError) as exc:
            raise NoJsonFound(f"object is neither JSON nor a literal dict: {exc}") from exc
    if not isinstance(obj, dict):
        raise NoJsonFound("top-level JSON value is not an object")
    return obj


def _as_bool(value, key: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in ("true", "yes", "1"):
            return True
        if lowered in ("false", "no", "0"):
            return False
    raise InvalidEnum(f"{key}: expected a boolean, got {value!r}")


def _as_optional_number(value, key: str) -> float | None:
    if value is None or (isinstance(value, str) and value.strip().lower() in ("", "null", "none")):
        return None
    if isinstance(value, bool):
        raise InvalidEnum(f"{key}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    raise InvalidEnum(f"{key}: expected a number, got {value!r}")


def _as_optional_str(value) -> str | None:
    if value is None:
        return None
    text = str(value).strip()
    if text.lower() in ("", "null", "none"):
        return None
    return text


def normalize_unit(unit: str | None) -> str | None:
    if unit is None:
        return None
    u = unit.strip().lower().rstrip(".")
    if u in ("b", "byte", "bytes"):
        return "B"
    if u in ("kb", "kilobyte", "kilobytes"):
        return "KB"
    if u in ("mb", "megabyte", "megabytes"):
        return "MB"
    raise InvalidEnum(f"unknown byte unit {unit!r}")


def _parse_metric_value(value) -> list[MetricSpec]:
    if value is None:
        return []
    items = value if isinstance(value, (list, tuple)) else [value]
    return [m if isinstance(m, MetricSpec) else MetricSpec.parse(m) for m in items]


def parse_plan_text(text: str, strict: bool = False) -> RequestPlan:
    """Extract a RequestPlan from model output text.

    Strips code fences and surrounding prose, locates the outermost JSON (or
    Python-literal) object, and maps keys case-insensitively. Unknown keys
    are ignored unless ``strict``.
    """
    obj = _load_object(text)
    plan = RequestPlan()
    for key, value in obj.items():
        name = _FIELD_BY_LOWER_KEY.get(str(key).strip().lower())
        if name is None:
            if strict:
                raise UnknownField(f"unknown plan field {key!r}")
            log.debug("ignoring unknown plan field %r", key)
            continue
        if name == "file_path":
            plan.file_path = str(value or "").strip()
        elif name == "compression_mode":
            mode = str(value or "distortion").strip().lower().replace(" ", "_")
            if mode not in COMPRESSION_MODES:
                raise InvalidEnum(f"unknown compression mode {value!r}")
            plan.compression_mode = mode
        elif name in ("roi_coding", "specific_performance_limit", "specific_bitrate_limit"):
            setattr(plan, name, _as_bool(value, name))
        elif name == "roi_object":
            plan.roi_object = _as_optional_str(value)
        elif name == "objects_to_transmit":
            if isinstance(value, (list, tuple)):
                value = ", ".join(str(v) for v in value)
            plan.objects_to_transmit = (_as_optional_str(value) or "all").lower()
        elif name == "encoded_size_level":
            level = str(value or "medium").strip().lower()
            if level not in SIZE_LEVELS:
                raise InvalidEnum(f"unknown size level {value!r}")
            plan.encoded_size_level = level
        elif name == "performance_metric":
            plan.performance_metric = _parse_metric_value(value)
        elif name == "bitrate_unit":
            plan.bitrate_unit = normalize_unit(_as_optional_str(value))
        else:  # numeric bounds
            setattr(plan, name, _as_optional_number(value, name))
    return plan


def normalize(plan: RequestPlan) -> RequestPlan:
    """Apply schema rules and defaults; idempotent; validates invariants."""
    out = replace(plan, performance_metric=list(plan.performance_metric))
    out.compression_mode = out.compression_mode.strip().lower().replace(" ", "_")
    if out.compression_mode not in COMPRESSION_MODES:
        raise InvalidEnum(f"unknown compression mode {plan.compression_mode!r}")
    out.encoded_size_level = out.encoded_size_level.strip().lower()
    if out.encoded_size_level not in SIZE_LEVELS:
        raise InvalidEnum(f"unknown size level {plan.encoded_size_level!r}")
    out.objects_to_transmit = (out.objects_to_transmit or "all").strip().lower()
    out.bitrate_unit = normalize_unit(out.bitrate_unit)
    if out.roi_object is not None:
        out.roi_object = out.roi_object.strip().lower()

    # a numeric size limit overrides any named size level
    if out.specific_bitrate_limit:
        out.encoded_size_level = "medium"
    if not out.roi_coding and out.roi_object is not None:
        log.warning("roi_object %r cleared: RoI coding is off", out.roi_object)
        out.roi_object = None

    if not out.performance_metric:
        if out.roi_coding and out.compression_mode == "distortion":
            out.performance_metric = [MetricSpec("weighted_psnr")]
        else:
            out.performance_metric = [MetricSpec(out.compression_mode)]

    if out.specific_bitrate_limit:
        if out.bitrate_max is None:
            raise InvariantViolation("bitrate limit set but bitrate_max missing")
        if out.bitrate_unit is None:
            raise InvariantViolation("bitrate limit set but bitrate_unit missing")
    if out.roi_coding and out.compression_mode == "distortion":
        if not any(m.kind == "weighted_psnr" for m in out.performance_metric):
            raise InvariantViolation(
                "RoI coding in distortion mode requires a weighted_PSNR metric"
            )
    return out


def size_to_bytes(value: float, unit: str) -> int:
    """Convert a size in B/KB/MB (SI decimal) to whole bytes."""
    if value is None or value <= 0:
        raise NonPositive(f"size must be positive, got {value}")
    factor = BYTE_UNITS.get(normalize_unit(unit) or "")
    if factor is None:
        raise InvalidEnum(f"unknown byte unit {unit!r}")
    return int(round(value * factor))


# --- deterministic rule-based planner ---------------------------------------

_FILE_RE = re.compile(r"([\w\-./]+\.(?:png|jpe?g|ppm|pgm|bmp|tiff?))", re.IGNORECASE)
_UNIT_RE = r"(bytes?|b|kb|mb)"
_NUM_RE = r"(\d+(?:\.\d+)?)"

_ROI_PATTERNS = (
    re.compile(r"keep (?:the )?([a-z0-9 _-]+?)(?: in [\w\-./]+)? (?:clear|sharp)"),
    re.compile(r"keep (?:the )?([a-z0-9 _-]+?) (?:with|in|at) (?:the )?high(?:est)? quality"),
    re.compile(r"ensure (?:the )?([a-z0-9 _-]+?) (?:remains?|stays?|looks?) (?:clear|sharp|readable|legible)"),
    re.compile(r"prioritize (?:the )?(?:quality of )?(?:the )?([a-z0-9 _-]+?)(?:\.|,| and| while)"),
)

_MODE_KEYWORDS = (
    ("pose_estimation", ("pose estimation", "pose_estimation")),
    ("classification", ("classification", "classify", "classifier")),
    ("segmentation", ("segmentation", "segmenting")),
    ("detection", ("detection", "detecting", "detector")),
    ("perception", ("perception", "perceptual", "looks great", "look great",
                    "looks good", "look good", "looks nice", "visual quality",
                    "visually pleasing", "appearance")),
    ("distortion", ("distortion",)),
)

_SIZE_MAX_RE = re.compile(
    r"(?:under|below|less than|at most|no more than|smaller than|within|not exceed\w*|"
    r"about|around|approximately|roughly|of)\s+" + _NUM_RE + r"\s*" + _UNIT_RE + r"\b"
)
_SIZE_MIN_RE = re.compile(
    r"(?:at least|above|over|more than|bigger than|larger than)\s+"
    + _NUM_RE + r"\s*" + _UNIT_RE + r"\b"
)
_SIZE_BETWEEN_RE = re.compile(
    r"between\s+" + _NUM_RE + r"\s*" + _UNIT_RE + r"?\s+and\s+" + _NUM_RE + r"\s*" + _UNIT_RE + r"\b"
)
_SIZE_ANY_RE = re.compile(_NUM_RE + r"\s*" + _UNIT_RE + r"\b")
_PSNR_TARGET_RE = re.compile(
    r"psnr (?:of |at |to )?(?:about |around |approximately |roughly )?"
    + _NUM_RE + r"\s*db"
)
_ROI_RATIO_RE = re.compile(r"roi[a-z ]*?(?:scale|ratio)[a-z ]*?(?:to |of |at |= ?)?(0?\.\d+|1(?:\.0+)?)")
_LEVEL_RE = re.compile(r"target an? (minimum|small|medium|large|maximum) file size")

_ONLY_OBJECT_RES = (
    (re.compile(r"only (?:compress|transmit|keep|send|encode) (?:the )?background"), "background"),
    (re.compile(r"only (?:compress|transmit|keep|send|encode) (?:the )?foreground"), "foreground"),
    (re.compile(r"(?:transmit|compress|keep|send) only (?:the )?([a-z0-9 _-]+?)(?:\.|,| of| in| from)"), None),
    (re.compile(r"only (?:compress|transmit|keep|send|encode) (?:the )?([a-z0-9 _-]+?)(?:\.|,| of| in| from)"), None),
)

_BOTH_RE = re.compile(r"both human vision and (?:the )?([a-z_ ]+?) task")


def _clean_object_phrase(phrase: str) -> str:
    phrase = phrase.strip().strip(".").strip()
    phrase = re.sub(r"\s+(objects?|regions?|areas?)$", "", phrase)
    return phrase


def rule_parse(instruction: str) -> RequestPlan:
    """Deterministic keyword/regex planner; always emits a valid plan."""
    low = instruction.lower()
    plan = RequestPlan()

    m = _FILE_RE.search(instruction)
    if m:
        plan.file_path = m.group(1)

    machine_task: str | None = None
    both = _BOTH_RE.search(low)
    if both:
        plan.compression_mode = "distortion"
        task = both.group(1).strip().replace(" ", "_")
        if task in COMPRESSION_MODES:
            machine_task = task
    else:
        for mode, keywords in _MODE_KEYWORDS:
            if any(k in low for k in keywords):
                plan.compression_mode = mode
                break
    if plan.compression_mode in MACHINE_MODES:
        machine_task = plan.compression_mode

    for pattern in _ROI_PATTERNS:
        m = pattern.search(low)
        if m:
            plan.roi_coding = True
            plan.roi_object = _clean_object_phrase(m.group(1))
            break

    for pattern, fixed in _ONLY_OBJECT_RES:
        m = pattern.search(low)
        if m:
            plan.objects_to_transmit = fixed or _clean_object_phrase(m.group(1))
            break
    else:
        plan.objects_to_transmit = "foreground" if machine_task else "all"

    m = _SIZE_BETWEEN_RE.search(low)
    if m:
        lo_val, lo_unit, hi_val, hi_unit = m.groups()
        plan.bitrate_min = float(lo_val)
        plan.bitrate_max = float(hi_val)
        plan.bitrate_unit = normalize_unit(hi_unit)
        if lo_unit and normalize_unit(lo_unit) != plan.bitrate_unit:
            # express both bounds in the max bound's unit
            plan.bitrate_min = size_to_bytes(plan.bitrate_min, lo_unit) / BYTE_UNITS[plan.bitrate_unit]
        plan.specific_bitrate_limit = True
    else:
        m = _SIZE_MAX_RE.search(low)
        if m:
            plan.bitrate_max = float(m.group(1))
            plan.bitrate_unit = normalize_unit(m.group(2))
            plan.specific_bitrate_limit = True
        m = _SIZE_MIN_RE.search(low)
        if m:
            plan.bitrate_min = float(m.group(1))
            unit = normalize_unit(m.group(2))
            if plan.bitrate_unit and unit != plan.bitrate_unit:
                plan.bitrate_min = size_to_bytes(plan.bitrate_min, unit) / BYTE_UNITS[plan.bitrate_unit]
            else:
                plan.bitrate_unit = unit
            plan.specific_bitrate_limit = True

    m = _PSNR_TARGET_RE.search(low)
    psnr_target = None
    if m:
        psnr_target = float(m.group(1))
        plan.specific_performance_limit = True
        plan.performance_max = psnr_target

    m = _LEVEL_RE.search(low)
    if m:
        plan.encoded_size_level = m.group(1)
    elif re.search(r"as small as possible|smallest possible", low):
        plan.encoded_size_level = "minimum"
    elif re.search(r"highest possible|best possible|as (?:good|close to the original) as possible|maximum quality", low):
        plan.encoded_size_level = "maximum"

    ratio = None
    m = _ROI_RATIO_RE.search(low)
    if m:
        ratio = float(m.group(1))
    wants_weighted = "weighted psnr" in low or "weighted_psnr" in low or ratio is not None

    metrics: list[MetricSpec] = []
    if plan.roi_coding and plan.compression_mode == "distortion":
        alpha = ratio if ratio is not None else 0.8
        metrics.append(MetricSpec("weighted_psnr", alpha, round(1.0 - alpha, 6)))
    elif wants_weighted:
        alpha = ratio if ratio is not None else 0.8
        metrics.append(MetricSpec("weighted_psnr", alpha, round(1.0 - alpha, 6)))
    elif psnr_target is not None:
        metrics.append(MetricSpec("psnr"))
    else:
        metrics.append(MetricSpec(plan.compression_mode))
    if machine_task and plan.compression_mode == "distortion":
        metrics.append(MetricSpec(machine_task))
    plan.performance_metric = metrics

    return normalize(plan)


# --- scoring -----------------------------------------------------------------

def _canon_object(value: str | None) -> str | None:
    if value is None:
        return None
    text = " ".join(value.strip().lower().split())
    return _SYNONYMS.get(text, text)


def _bytes_or_none(value, unit) -> float | None:
    if value is None:
        return None
    return float(size_to_bytes(value, unit or "B"))


def _numbers_match(a: float | None, b: float | None) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return abs(a - b) <= 1e-9 * max(1.0, abs(a), abs(b))


def _metrics_match(a: list[MetricSpec], b: list[MetricSpec]) -> bool:
    if len(a) != len(b):
        return False
    remaining = list(b)
    for spec in a:
        for i, other in enumerate(remaining):
            if spec.matches(other):
                del remaining[i]
                break
        else:
            return False
    return True


def score(pred: RequestPlan, gold: GoldLabel) -> FieldReport:
    """Field-by-field comparison of a predicted plan against its gold label."""
    flags = {
        "file_path": pred.file_path.strip().lower() == gold.file_path.strip().lower(),
        "compression_mode": pred.compression_mode == gold.compression_mode,
        "roi_coding": pred.roi_coding == gold.roi_coding,
        "roi_object": _canon_object(pred.roi_object) == _canon_object(gold.roi_object),
        "objects_to_transmit": _canon_object(pred.objects_to_transmit)
        == _canon_object(gold.objects_to_transmit),
        "encoded_size_level": pred.encoded_size_level == gold.encoded_size_level,
        "specific_performance_limit": pred.specific_performance_limit
        == gold.specific_performance_limit,
        "specific_bitrate_limit": pred.specific_bitrate_limit == gold.specific_bitrate_limit,
        "performance_metric": _metrics_match(pred.performance_metric, gold.performance_metric),
        "bitrate_min": _numbers_match(
            _bytes_or_none(pred.bitrate_min, pred.bitrate_unit),
            _bytes_or_none(gold.bitrate_min, gold.bitrate_unit),
        ),
        "bitrate_max": _numbers_match(
            _bytes_or_none(pred.bitrate_max, pred.bitrate_unit),
            _bytes_or_none(gold.bitrate_max, gold.bitrate_unit),
        ),
        "performance_min": _numbers_match(pred.performance_min, gold.performance_min),
        "performance_max": _numbers_match(pred.performance_max, gold.performance_max),
    }
    return FieldReport(flags=flags, success=all(flags.values()))


def aggregate(item_results: list[tuple[str, list[bool]]], repeats: int) -> SuccessReport:
    """Item-weighted success aggregation.

    ``item_results`` holds one (difficulty, per-repeat successes) entry per
    bench item; every item must carry exactly ``repeats`` runs.
    """
    if repeats < 1:
        raise MissingRuns("repeats must be >= 1")
    rates: list[tuple[str, float]] = []
    for difficulty, runs in item_results:
        if len(runs) != repeats:
            raise MissingRuns(
                f"item with difficulty {difficulty!r} has {len(runs)} runs, expected {repeats}"
            )
        rates.append((difficulty, sum(bool(r) for r in runs) / repeats))

    def pct(subset):
        return 100.0 * sum(r for _, r in subset) / len(subset) if subset else 0.0

    simple = [r for r in rates if r[0] == "simple"]
    hard = [r for r in rates if r[0] == "hard"]
    return SuccessReport(
        simple_pct=pct(simple),
        hard_pct=pct(hard),
        all_pct=pct(rates),
        n_simple=len(simple),
        n_hard=len(hard),
        item_rates=rates,
    )
