"""Greedy set-cover baseline: cycle through a greedy cover in selection order."""
from __future__ import annotations

import numpy as np

from .errors import InstanceError
from .evaluator import CyclicSchedule
from .instance import Instance


def greedy_cover(instance: Instance) -> list[int]:
    """Repeatedly take the test covering the most uncovered elements (lowest index on ties)."""
    uncovered = np.ones(instance.n, dtype=bool)
    picks = []
    while uncovered.any():
        gains = [int(uncovered[t].sum()) for t in instance.tests]
        best = int(np.argmax(gains))
        if gains[best] == 0:
            missing = [instance.element_ids[e] for e in np.flatnonzero(uncovered)[:5]]
            raise InstanceError(f"no test covers element(s) {', '.join(missing)}")
        picks.append(best)
        uncovered[instance.tests[best]] = False
    return picks


def set_cover_schedule(instance: Instance) -> CyclicSchedule:
    return CyclicSchedule(tuple(greedy_cover(instance)), "setcover")
