"""Social-force pedestrians in the corridor.

Four pedestrians walk toward the near end while repelling each other and
the walls; the plot shows their traces and speed profiles.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from langnav.simulate import SocialForceParams, social_force_step, \
    spawn_pedestrians
from langnav.world import load_scenario

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

scenario = load_scenario("corridor")
params = SocialForceParams()
peds = spawn_pedestrians(scenario, seed=7)

traces = {p.id: [p.position] for p in peds}
speeds = {p.id: [0.0] for p in peds}
dt, t_end = 0.1, 12.0
for _ in range(int(t_end / dt)):
    peds = social_force_step(peds, None, scenario, params, dt)
    for p in peds:
        traces[p.id].append(p.position)
        speeds[p.id].append(np.hypot(*p.velocity))

fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(9, 6),
                               gridspec_kw={"height_ratios": [2, 1]})
for pid, pts in traces.items():
    xy = np.array(pts)
    ax1.plot(xy[:, 0], xy[:, 1], label=f"pedestrian {pid}")
    ax1.plot(xy[0, 0], xy[0, 1], "o", color=ax1.lines[-1].get_color())
for y in (-2, 2):
    ax1.axhline(y, color="k", linewidth=2)
ax1.set_aspect("equal")
ax1.set_xlim(0, 20)
ax1.set_title("corridor pedestrians (circles mark spawn points)")
ax1.legend(fontsize=8, loc="upper right")

time_axis = np.arange(len(speeds[0])) * dt
for pid, vel in speeds.items():
    ax2.plot(time_axis, vel)
ax2.axhline(params.desired_speed, color="gray", linestyle="--",
            label="desired speed")
ax2.axhline(params.max_speed, color="red", linestyle=":",
            label="speed clamp")
ax2.set_xlabel("t [s]")
ax2.set_ylabel("speed [m/s]")
ax2.legend(fontsize=8)
fig.tight_layout()
fig.savefig(OUT / "social_forces.png", dpi=120)
print(f"wrote {OUT / 'social_forces.png'}")
