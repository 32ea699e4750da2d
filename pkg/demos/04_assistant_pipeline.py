"""Transcript of the assistant pipeline on the deterministic mock backend.

Each query is routed, possibly regenerates the cost function or consults
the (text-described) camera, and ends in new importance ratings, weights
and parameters.
"""

from langnav.assistants import AssistantPipeline, MockBackend
from langnav.assistants.pipeline import Query, initial_ratings
from langnav.costspec import default_path_spec


class Console:
    def __init__(self, spec):
        self._spec = spec
        self.ratings = initial_ratings(spec)

    @property
    def spec(self):
        return self._spec

    def apply(self, spec, ratings):
        self._spec = spec
        self.ratings = dict(ratings)

    def scene_description(self):
        return "narrow corridor congested with pedestrians"


def show(spec, ratings):
    print(f"    terms:   {', '.join(spec.term_names())}")
    print("    ratings: " + ", ".join(
        f"{k}={ratings[k]}" for k in spec.term_names()))
    print("    weights: " + ", ".join(
        f"{k}={spec.weights[k]:.2f}" for k in spec.term_names()))
    tunables = sorted(spec.params.tunable_names())
    print("    params:  " + ", ".join(
        f"{k}={spec.params[k].value:g}" for k in tunables))


pipeline = AssistantPipeline(MockBackend())
console = Console(default_path_spec())

print("initial cost function (path tracking):")
show(console.spec, console.ratings)

for text in [
    "Be faster.",
    "Stick to the path.",
    "Reach the goal.",
    "Go to the goal while keeping a safe distance from humans.",
    "Take more distance to humans.",
    "Adapt to the environment.",
]:
    print(f"\n>>> {text!r}")
    events = pipeline.handle_query(Query(text), console)
    for e in events:
        print(f"    [{e.stage:<10}] {e.detail}")
    show(console.spec, console.ratings)
