"""Tour of the cost-expression language.

Parses a few cost terms, evaluates them, differentiates them, and plots
the conditional safe-distance term over robot-human distance.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from langnav import evaluate, grad, parse_expr, pretty
from langnav.costspec import builtin

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

print("== builtin terms ==")
for name in ("contour", "lag", "accel", "omega", "velocity", "goal"):
    print(f"  {name:10s} {pretty(builtin(name))}")

print("\n== velocity tracking ==")
vel = parse_expr("(v - v_ref)^2")
for v in (0.5, 1.5, 2.5):
    value = evaluate(vel, {"v": v, "v_ref": 1.5})
    dv = grad(vel, {"v": v, "v_ref": 1.5}, ["v"])[0]
    print(f"  v={v:.1f}  J={value:.3f}  dJ/dv={dv:+.3f}")

print("\n== conditional safe-distance term ==")
sd_source = ("if_else((oh_x - px)^2 + (oh_y - py)^2 - d_safe^2, 0, "
             "((oh_x - px)^2 + (oh_y - py)^2 - d_safe^2)^2)")
sd = parse_expr(sd_source)
print(f"  source: {sd_source}")

distances = np.linspace(0.0, 3.0, 300)
values = [
    evaluate(sd, {"oh_x": d, "oh_y": 0.0, "px": 0.0, "py": 0.0,
                  "d_safe": 1.5})
    for d in distances
]
gradients = [
    grad(sd, {"oh_x": d, "oh_y": 0.0, "px": 0.0, "py": 0.0, "d_safe": 1.5},
         ["px"])[0]
    for d in distances
]

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
ax1.plot(distances, values)
ax1.axvline(1.5, color="gray", linestyle="--", label="d_safe")
ax1.set_xlabel("distance to human [m]")
ax1.set_ylabel("term value")
ax1.set_title("penalty active only inside the safe distance")
ax1.legend()
ax2.plot(distances, gradients)
ax2.axvline(1.5, color="gray", linestyle="--")
ax2.set_xlabel("distance to human [m]")
ax2.set_ylabel("d(term)/d(px)")
ax2.set_title("push-away gradient")
fig.tight_layout()
fig.savefig(OUT / "cost_language.png", dpi=120)
print(f"\nwrote {OUT / 'cost_language.png'}")
