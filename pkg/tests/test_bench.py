import json

import pytest

from compx.bench import (
    BenchReport,
    default_suite_path,
    load_suite,
    rd_sweep,
    render_bench_report,
    render_curves,
    run_success_eval,
    write_report,
)
from compx.errors import BadDifficulty, CurveNonMonotone, DuplicateId, LabelParseError
from compx.llmclient import ChatConfig, ScriptedTransport
from compx.metrics import bd_delta
from compx.prompts import PromptBundle
from compx.testimages import synthetic_image


def test_load_bundled_mini_suite():
    suite = load_suite()
    assert len(suite) == 12
    seeds = [item for item in suite if item.id.startswith("seed_")]
    assert len(seeds) == 5
    difficulties = {item.id: item.difficulty for item in suite}
    assert sum(d == "simple" for d in difficulties.values()) == 6
    assert sum(d == "hard" for d in difficulties.values()) == 6


def test_load_suite_duplicate_id(tmp_path):
    line = json.dumps({"id": "x", "difficulty": "simple", "instruction": "hi",
                       "label": {"file_path": "a.png"}})
    path = tmp_path / "suite.jsonl"
    path.write_text(line + "\n" + line + "\n")
    with pytest.raises(DuplicateId):
        load_suite(path)


def test_load_suite_bad_difficulty(tmp_path):
    line = json.dumps({"id": "x", "difficulty": "medium", "instruction": "hi",
                       "label": {"file_path": "a.png"}})
    path = tmp_path / "suite.jsonl"
    path.write_text(line + "\n")
    with pytest.raises(BadDifficulty):
        load_suite(path)


def test_load_suite_label_error_carries_line(tmp_path):
    good = json.dumps({"id": "x", "difficulty": "simple", "instruction": "hi",
                       "label": {"file_path": "a.png"}})
    bad = json.dumps({"id": "y", "difficulty": "hard", "instruction": "hi",
                      "label": {"compression_mode": "telepathy"}})
    path = tmp_path / "suite.jsonl"
    path.write_text(good + "\n" + bad + "\n")
    with pytest.raises(LabelParseError, match=":2"):
        load_suite(path)


def test_rules_planner_aces_seed_items():
    suite = [item for item in load_suite() if item.id.startswith("seed_")]
    report = run_success_eval("rules", suite, repeats=1)
    assert all(all(runs) for _, _, runs in report.item_results)


def test_rules_planner_on_full_mini_suite():
    report = run_success_eval("rules", load_suite(), repeats=1)
    successes = sum(all(runs) for _, _, runs in report.item_results)
    assert successes >= 11


def test_scripted_llm_replay_scores_100():
    suite = load_suite()[:3]
    replies = [item.gold.to_json_text() for item in suite]
    report = run_success_eval("llm", suite, repeats=1,
                              bundle=PromptBundle("p", "r"),
                              config=ChatConfig(api_key="x"),
                              transport=ScriptedTransport(replies))
    assert report.summary.all_pct == 100.0


def test_scripted_llm_with_one_wrong_mode():
    # 12 items (6 simple / 6 hard), one simple item answered with a wrong mode
    suite = load_suite()
    replies = []
    for item in suite:
        text = item.gold.to_json_text()
        if item.id == "seed_looks_great":  # flip perception -> distortion
            text = text.replace('"perception"', '"distortion"')
        replies.append(text)
    report = run_success_eval("llm", suite, repeats=1,
                              bundle=PromptBundle("p", "r"),
                              config=ChatConfig(api_key="x"),
                              transport=ScriptedTransport(replies))
    assert report.summary.simple_pct == pytest.approx(100 * 5 / 6, abs=0.01)
    assert report.summary.hard_pct == 100.0
    assert report.summary.all_pct == pytest.approx(100 * 11 / 12, abs=0.01)


def test_planning_errors_count_as_failures():
    suite = load_suite()[:2]
    report = run_success_eval("llm", suite, repeats=1,
                              bundle=PromptBundle("p", "r"),
                              config=ChatConfig(api_key="x"),
                              transport=ScriptedTransport(["not json", "also not"]))
    assert report.summary.all_pct == 0.0
    assert len(report.failures) == 2


def test_rules_eval_is_reproducible():
    suite = load_suite()
    a = run_success_eval("rules", suite, repeats=2)
    b = run_success_eval("rules", suite, repeats=2)
    assert render_bench_report(a, "json") == render_bench_report(b, "json")


def test_rd_sweep_single_noise_image(rng):
    img = synthetic_image(3, width=64, height=64)
    grid = [0.2, 0.4, 0.6, 0.8]
    curves = rd_sweep({"img": img}, grid)
    curve = curves["img"]
    assert len(curve.points) == 4
    bpps = [p.bpp for p in curve.points]
    assert all(b > a for a, b in zip(bpps, bpps[1:]))
    assert bd_delta(curve, curve, "psnr") == pytest.approx(0.0, abs=1e-12)
    assert curve.points[-1].metric >= curve.points[0].metric - 0.1


def test_rd_sweep_rejects_bad_grid():
    img = synthetic_image(3, width=32, height=32)
    with pytest.raises(CurveNonMonotone):
        rd_sweep({"img": img}, [0.2, 0.4, 0.6])
    with pytest.raises(CurveNonMonotone):
        rd_sweep({"img": img}, [0.2, 0.4, 0.4, 0.6])


def test_write_report_formats(tmp_path):
    report = run_success_eval("rules", load_suite(), repeats=1)
    md = tmp_path / "r.md"
    write_report(report, md, "markdown")
    text = md.read_text()
    assert "| Simple (%) | Hard (%) | All (%) |" in text

    curves = rd_sweep({"img": synthetic_image(1, 32, 32)}, [0.2, 0.4, 0.6, 0.8])
    csv_path = tmp_path / "c.csv"
    write_report(curves, csv_path, "csv", q_grid=[0.2, 0.4, 0.6, 0.8])
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "image,q,bpp,psnr"
    assert len(lines) == 5


def test_write_report_deterministic(tmp_path):
    report = run_success_eval("rules", load_suite(), repeats=1)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    write_report(report, a, "json")
    write_report(report, b, "json")
    assert a.read_bytes() == b.read_bytes()
