"""Author a benchmark suite: instructions plus gold labels, as JSONL.

Labels can be written out explicitly, or bootstrapped from the rule planner
and then reviewed by hand; the loader normalizes and validates every label.
"""

from compx import bench
from compx.plan import rule_parse

ITEMS = [
    ("ex_minsize", "simple", "Compress holiday.png as small as possible."),
    ("ex_pose_budget", "hard",
     "Compress court.jpg for pose estimation and keep it under 250 KB."),
]

rows = []
for item_id, difficulty, instruction in ITEMS:
    label = rule_parse(instruction).to_json_dict()  # review before publishing
    rows.append({"id": item_id, "difficulty": difficulty,
                 "instruction": instruction, "label": label})

bench.write_suite(rows, "demo_output/custom_suite.jsonl")
suite = bench.load_suite("demo_output/custom_suite.jsonl")
print(f"wrote demo_output/custom_suite.jsonl with {len(suite)} items")

report = bench.run_success_eval("rules", suite, repeats=1)
print(bench.render_bench_report(report, "markdown"))
