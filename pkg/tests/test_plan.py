import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compx.errors import (
    InvalidEnum,
    InvariantViolation,
    MissingRuns,
    NoJsonFound,
    NonPositive,
    RatioSumViolation,
    UnknownField,
)
from compx.plan import (
    MetricSpec,
    RequestPlan,
    aggregate,
    normalize,
    parse_plan_text,
    rule_parse,
    score,
    size_to_bytes,
)

SCREEN_LABEL = """
{
    "file_path": "image.png",
    "compression_mode": "distortion",
    "RoI_coding": true,
    "RoI_object": "screen",
    "Object_needed_to_be_transmitted": "all",
    "encoded_size_level": "medium",
    "specific_performance_limit": false,
    "specific_bitrate_limit": false,
    "performance_metric": "weighted_PSNR(0.8, 0.2)",
    "bitrate_min": null,
    "bitrate_max": null,
    "bitrate_unit": null,
    "performance_min": null,
    "performance_max": null
}
"""

# planner output in Python-literal style (single quotes, True/None)
PLANNING_BLOCK = """
{
'file_path': 'kodim03.png',
'compression_mode': 'distortion',
'RoI_coding': True,
'RoI_object': 'foreground',
'Object_needed_to_be_transmitted': 'all',
'encoded_size_level': 'medium',
'specific_performance_limit': False,
'specific_bitrate_limit': True,
'performance_metric': 'weighted_PSNR(0.8, 0.2)',
'bitrate_min': None,
'bitrate_max': 15000,
'bitrate_unit': 'Bytes',
'performance_min': None,
'performance_max': None
}
"""


def test_parse_screen_label():
    plan = parse_plan_text(SCREEN_LABEL)
    assert plan.file_path == "image.png"
    assert plan.compression_mode == "distortion"
    assert plan.roi_coding is True
    assert plan.roi_object == "screen"
    assert plan.objects_to_transmit == "all"
    assert plan.encoded_size_level == "medium"
    assert len(plan.performance_metric) == 1
    spec = plan.performance_metric[0]
    assert spec.kind == "weighted_psnr"
    assert spec.roi_ratio == pytest.approx(0.8)
    assert spec.nonroi_ratio == pytest.approx(0.2)
    assert plan.bitrate_max is None


def test_parse_python_literal_block():
    plan = normalize(parse_plan_text(PLANNING_BLOCK))
    assert plan.file_path == "kodim03.png"
    assert plan.roi_coding is True
    assert plan.roi_object == "foreground"
    assert plan.specific_bitrate_limit is True
    assert plan.bitrate_max == 15000
    assert plan.bitrate_unit == "B"


def test_parse_fenced_output_matches_unfenced():
    fenced = f"Sure, here is the plan:\n```json\n{SCREEN_LABEL}\n```\nDone."
    assert parse_plan_text(fenced) == parse_plan_text(SCREEN_LABEL)


def test_parse_ratio_sum_violation():
    with pytest.raises(RatioSumViolation):
        parse_plan_text('{"performance_metric": "weighted_PSNR(0.8, 0.3)"}')


def test_parse_no_json():
    with pytest.raises(NoJsonFound):
        parse_plan_text("I could not produce a plan, sorry.")


def test_parse_unknown_field_modes():
    text = '{"compression_mode": "distortion", "novelty": 1}'
    parse_plan_text(text)  # lenient default ignores
    with pytest.raises(UnknownField):
        parse_plan_text(text, strict=True)


def test_parse_invalid_enum():
    with pytest.raises(InvalidEnum):
        parse_plan_text('{"compression_mode": "telepathy"}')
    with pytest.raises(InvalidEnum):
        parse_plan_text('{"encoded_size_level": "gigantic"}')


def test_parse_keys_case_insensitive():
    plan = parse_plan_text('{"ROI_CODING": true, "roi_object": "cat", "COMPRESSION_MODE": "distortion"}')
    assert plan.roi_coding is True
    assert plan.roi_object == "cat"


def test_normalize_bitrate_limit_overrides_level():
    plan = RequestPlan(specific_bitrate_limit=True, bitrate_max=500,
                       bitrate_unit="KB", encoded_size_level="maximum")
    assert normalize(plan).encoded_size_level == "medium"


def test_normalize_idempotent():
    plan = normalize(rule_parse("Keep the screen in image.png clear."))
    assert normalize(plan) == plan


def test_normalize_clears_orphan_roi_object():
    plan = RequestPlan(roi_coding=False, roi_object="cat")
    assert normalize(plan).roi_object is None


def test_normalize_requires_bitrate_fields():
    with pytest.raises(InvariantViolation):
        normalize(RequestPlan(specific_bitrate_limit=True))


def test_normalize_requires_weighted_metric_for_roi_distortion():
    plan = RequestPlan(roi_coding=True, roi_object="cat",
                       performance_metric=[MetricSpec("distortion")])
    with pytest.raises(InvariantViolation):
        normalize(plan)


def test_size_to_bytes():
    assert size_to_bytes(15000, "B") == 15000
    assert size_to_bytes(500, "KB") == 500000
    assert size_to_bytes(1, "MB") == 1000000
    assert size_to_bytes(15000, "Bytes") == 15000
    with pytest.raises(NonPositive):
        size_to_bytes(0, "B")
    with pytest.raises(InvalidEnum):
        size_to_bytes(5, "GB")


def test_round_trip_serialization():
    for text in ("Keep the screen in image.png clear.",
                 "Compress a.png for object detection and keep it under 500KB.",
                 "Make sure picture.jpg looks great after compression."):
        plan = rule_parse(text)
        assert parse_plan_text(plan.to_json_text()) == plan


@st.composite
def normalized_plans(draw):
    mode = draw(st.sampled_from(
        ("distortion", "perception", "classification", "segmentation",
         "detection", "pose_estimation")))
    roi = draw(st.booleans())
    plan = RequestPlan(
        file_path=draw(st.sampled_from(("a.png", "shot.jpg", "scan.ppm"))),
        compression_mode=mode,
        roi_coding=roi,
        roi_object=draw(st.sampled_from(("screen", "text", "foreground"))) if roi else None,
        objects_to_transmit=draw(st.sampled_from(("all", "foreground", "background"))),
        encoded_size_level=draw(st.sampled_from(
            ("minimum", "small", "medium", "large", "maximum"))),
    )
    if draw(st.booleans()):
        plan.specific_bitrate_limit = True
        plan.bitrate_max = draw(st.integers(1, 10_000))
        plan.bitrate_unit = draw(st.sampled_from(("B", "KB", "MB")))
    if roi and mode == "distortion":
        alpha = round(draw(st.floats(0.1, 0.9)), 3)
        plan.performance_metric = [MetricSpec("weighted_psnr", alpha,
                                              round(1 - alpha, 3))]
    return normalize(plan)


@settings(max_examples=80, deadline=None)
@given(normalized_plans())
def test_round_trip_serialization_property(plan):
    assert parse_plan_text(plan.to_json_text()) == plan
    assert normalize(plan) == plan  # idempotence


@settings(max_examples=80, deadline=None)
@given(normalized_plans())
def test_score_reflexive_property(plan):
    assert score(plan, plan).success


# --- rule planner on the seed items -----------------------------------------

def test_rule_parse_screen_seed():
    plan = rule_parse("Keep the screen in image.png clear.")
    gold = normalize(parse_plan_text(SCREEN_LABEL))
    report = score(plan, gold)
    assert report.success, report.failed_fields


def test_rule_parse_background_seed():
    plan = rule_parse("Only compress the background in this picture.png.")
    assert plan.objects_to_transmit == "background"
    assert plan.compression_mode == "distortion"
    assert plan.roi_coding is False
    assert plan.performance_metric[0].kind == "distortion"


def test_rule_parse_detection_seed():
    plan = rule_parse(
        "Compress the image.jpg for object detection and ensure the file size is under 500KB."
    )
    assert plan.compression_mode == "detection"
    assert plan.objects_to_transmit == "foreground"
    assert plan.specific_bitrate_limit is True
    assert plan.bitrate_max == 500
    assert plan.bitrate_unit == "KB"
    assert plan.encoded_size_level == "medium"
    assert plan.performance_metric[0].kind == "detection"


def test_rule_parse_case_study_instruction():
    plan = rule_parse(
        "Compress kodim03.png. Keep foreground objects with high quality. "
        "When evaluating the result, I want to use weighted PSNR, and set the "
        "RoI region scale to 0.8. A Target file size is about 15000 Bytes."
    )
    gold = normalize(parse_plan_text(PLANNING_BLOCK))
    report = score(plan, gold)
    assert report.success, report.failed_fields


def test_rule_parse_always_normalizes():
    for text in ("", "hello", "Compress x.png", "make it tiny",
                 "Compress a.jpg for segmentation."):
        plan = rule_parse(text)
        assert normalize(plan) == plan


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=120))
def test_rule_parse_never_crashes(text):
    plan = rule_parse(text)
    assert normalize(plan) == plan


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from([
    "Compress photo.png", "for object detection", "for pose estimation",
    "keep the screen clear", "keep foreground objects with high quality",
    "only compress the background", "under 500KB", "about 15000 Bytes",
    "Target a PSNR of about 35 dB", "Target a large file size",
    "I want weighted PSNR with RoI ratio 0.7", "between 50 KB and 80 KB",
    "so it looks great",
]), min_size=1, max_size=5))
def test_rule_parse_handles_phrase_combinations(phrases):
    plan = rule_parse(". ".join(phrases) + ".")
    assert normalize(plan) == plan


# --- scoring -----------------------------------------------------------------

def test_score_reflexive():
    plan = rule_parse("Keep the screen in image.png clear.")
    report = score(plan, plan)
    assert report.success and all(report.flags.values())


def test_score_single_field_failure():
    gold = rule_parse("Make sure picture.jpg looks great after compression.")
    pred = normalize(RequestPlan(
        file_path="picture.jpg", compression_mode="distortion",
        performance_metric=[MetricSpec("perception")]))
    report = score(pred, gold)
    assert not report.success
    assert report.failed_fields == ["compression_mode"]


def test_score_bitrate_unit_normalization():
    a = normalize(RequestPlan(specific_bitrate_limit=True, bitrate_max=500000,
                              bitrate_unit="B"))
    b = normalize(RequestPlan(specific_bitrate_limit=True, bitrate_max=500,
                              bitrate_unit="KB"))
    report = score(a, b)
    assert report.flags["bitrate_max"]
    assert report.success


def test_score_null_only_matches_null():
    a = RequestPlan(roi_coding=True, roi_object="cat",
                    performance_metric=[MetricSpec("weighted_psnr")])
    b = RequestPlan(roi_coding=True, roi_object=None,
                    performance_metric=[MetricSpec("weighted_psnr")])
    assert not score(normalize(a), normalize(b)).flags["roi_object"]


def test_score_metric_lists_order_insensitive():
    a = RequestPlan(performance_metric=[MetricSpec("distortion"), MetricSpec("detection")])
    b = RequestPlan(performance_metric=[MetricSpec("detection"), MetricSpec("distortion")])
    assert score(a, b).flags["performance_metric"]


def test_score_synonyms():
    a = RequestPlan(objects_to_transmit="human")
    b = RequestPlan(objects_to_transmit="person")
    assert score(a, b).flags["objects_to_transmit"]


def test_score_symmetric_failure_count():
    a = rule_parse("Keep the screen in image.png clear.")
    b = rule_parse("Compress the image.jpg for object detection and "
                   "ensure the file size is under 500KB.")
    assert len(score(a, b).failed_fields) == len(score(b, a).failed_fields)


# --- aggregation ---------------------------------------------------------------

def test_aggregate_single_run_simple_rate():
    items = [("simple", [True])] * 78 + [("simple", [False])] * 15
    report = aggregate(items, repeats=1)
    assert report.simple_pct == pytest.approx(83.87, abs=0.01)


def test_aggregate_item_weighted_all():
    # simple 83.87% over 93 items and hard 81.70% over 102 -> all 82.74%
    simple_successes = round(83.87 / 100 * 93 * 3)
    hard_successes = round(81.70 / 100 * 102 * 3)
    items = []
    remaining = simple_successes
    for _ in range(93):
        take = min(3, remaining)
        items.append(("simple", [True] * take + [False] * (3 - take)))
        remaining -= take
    remaining = hard_successes
    for _ in range(102):
        take = min(3, remaining)
        items.append(("hard", [True] * take + [False] * (3 - take)))
        remaining -= take
    report = aggregate(items, repeats=3)
    assert report.simple_pct == pytest.approx(83.87, abs=0.01)
    assert report.hard_pct == pytest.approx(81.70, abs=0.01)
    expected_all = (83.87 * 93 + 81.70 * 102) / 195
    assert expected_all == pytest.approx(82.74, abs=0.01)
    assert report.all_pct == pytest.approx(expected_all, abs=0.01)


def test_aggregate_zero_successes():
    items = [("simple", [False]), ("hard", [False])]
    report = aggregate(items, repeats=1)
    assert report.simple_pct == 0.0
    assert report.hard_pct == 0.0
    assert report.all_pct == 0.0


def test_aggregate_missing_runs():
    with pytest.raises(MissingRuns):
        aggregate([("simple", [True, False])], repeats=3)
