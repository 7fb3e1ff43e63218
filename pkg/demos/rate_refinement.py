"""Iterative rate control: hit a byte budget from a natural-language request.

Runs the full plan/execute/evaluate loop with the deterministic bisection
proposer against a 512x512 scene, printing each iteration the way the
refinement prompt renders history.
"""

from compx import agent
from compx.prompts import history_line
from compx.testimages import convergence_image

TARGET_BYTES = 30000

deps = agent.SessionDeps(image=convergence_image(), planner="rules",
                         out_dir="demo_output/refinement")
trace = agent.run_session(
    f"Compress scene.png. Target a size of about {TARGET_BYTES} Bytes.", deps)

print(f"plan: size limit {trace.plan.bitrate_max} {trace.plan.bitrate_unit}, "
      f"byte window {trace.constraints.byte_window}")
for iteration in trace.iterations:
    print(" ", history_line(iteration), "->", iteration.verdict)
print(f"outcome: {trace.outcome}, chosen iteration {trace.chosen_iteration}")
print("artifacts in demo_output/refinement/")
