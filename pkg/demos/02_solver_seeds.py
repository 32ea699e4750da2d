"""One solver call, seed by seed.

A static human blocks the straight line to the goal.  The solver
optimizes a straight seed and two detour seeds independently and keeps
the cheapest feasible plan; the plot shows how the left/right seeds land
in different homotopies with near-mirror costs.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from langnav.benchmarks import reference_spec
from langnav.mpc import MpcConfig, PlanningScene, solve
from langnav.world import Human, ReferencePath, RobotState, predict_humans

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

cfg = MpcConfig()
human = Human(0, (2.5, 0.0), (0.0, 0.0))
scene = PlanningScene(
    x_init=RobotState(0, 0, 0, 1.0),
    path=ReferencePath([(0, 0), (10, 0)]),
    goal=(5.0, 0.0),
    corridors=(),
    robot_radius=0.3,
    predictions=tuple(predict_humans([human], cfg.horizon, cfg.dt)),
    human_radii=(0.3,),
)
spec = reference_spec("goal")
best, plans = solve(scene, spec, cfg)

print("seed  status      cost      max violation")
for p in plans:
    marker = " <- selected" if p.seed_id == best.seed_id else ""
    print(f"{p.seed_id:4d}  {p.status.value:10s}  {p.cost:8.3f}  "
          f"{p.max_violation:10.2e}{marker}")

fig, ax = plt.subplots(figsize=(8, 4))
colors = ["tab:blue", "tab:orange", "tab:green", "tab:red"]
for p in plans:
    pts = p.positions()
    style = "-" if p.seed_id == best.seed_id else "--"
    ax.plot(pts[:, 0], pts[:, 1], style, color=colors[p.seed_id % 4],
            label=f"seed {p.seed_id} (cost {p.cost:.1f})")
circle = plt.Circle(human.position, 0.6, color="gray", alpha=0.4,
                    label="keep-out (r_r + r_h)")
ax.add_patch(circle)
ax.plot(*scene.goal, "k*", markersize=14, label="goal")
ax.set_aspect("equal")
ax.set_xlabel("x [m]")
ax.set_ylabel("y [m]")
ax.legend(loc="upper right", fontsize=8)
ax.set_title("multi-seed trajectory optimization around a human")
fig.tight_layout()
fig.savefig(OUT / "solver_seeds.png", dpi=120)
print(f"\nwrote {OUT / 'solver_seeds.png'}")
