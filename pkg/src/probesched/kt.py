"""Kuhn-Tucker greedy scheduler.

Each element carries ``x[e] >= 1``, the number of probes since it was last
covered (counting the upcoming one). A step probes the test maximizing
``sum_{e in test} p_e x[e]^2``, then every ``x[e]`` grows by one and the
covered elements reset to one. The state space reachable from ``x = 1`` is
finite, so the sequence is eventually periodic; the period is returned as a
cyclic schedule.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InstanceError
from .evaluator import IDLE, CyclicSchedule
from .instance import Instance

log = logging.getLogger(__name__)

STATE_CAP = 1_000_000


@dataclass
class KTState:
    x: np.ndarray
    step: int = 0

    @classmethod
    def initial(cls, instance: Instance) -> "KTState":
        return cls(np.ones(instance.n, dtype=np.int64))

    def copy(self) -> "KTState":
        return KTState(self.x.copy(), self.step)

    def advance(self, instance: Instance, test: int) -> None:
        """Apply one probe of ``test`` (``-1``: idle slot) in place."""
        self.x += 1
        if test != IDLE:
            self.x[instance.tests[test]] = 1
        self.step += 1

    def key(self) -> bytes:
        return self.x.tobytes()


def best_test(instance: Instance, state: KTState, weights=None) -> int:
    """Index of the test with the largest ``sum p_e x[e]^2``; lowest index on ties."""
    w = instance.weights if weights is None else np.ascontiguousarray(weights, dtype=float)
    best = kernels.kt_best(instance.test_indptr, instance.test_indices, w, state.x)
    if best < 0:
        raise InstanceError("no test covers any element")
    return best


def kt_step(instance: Instance, state: KTState, weights=None) -> tuple[int, KTState]:
    """One scheduling decision. ``weights`` may differ from call to call (on-line use)."""
    test = best_test(instance, state, weights)
    new = state.copy()
    new.advance(instance, test)
    return test, new


def kt_schedule(
    instance: Instance, max_steps: int = 1_000_000, state_cap: int = STATE_CAP
) -> CyclicSchedule:
    """Run the greedy from ``x = 1`` until a state repeats and return the period.

    When no repeat shows up within ``max_steps`` steps (or ``state_cap``
    remembered states) the last half of the run is returned and the
    schedule's ``warning`` says so.
    """
    if max_steps < 1:
        raise InstanceError("max_steps must be positive")
    state = KTState.initial(instance)
    seen = {state.key(): 0}
    picks = []
    indptr, indices, w = instance.test_indptr, instance.test_indices, instance.weights
    tests = instance.tests
    x = state.x
    for step in range(max_steps):
        test = kernels.kt_best(indptr, indices, w, x)
        if test < 0:
            raise InstanceError("no test covers any element")
        picks.append(test)
        x += 1
        x[tests[test]] = 1
        key = x.tobytes()
        first = seen.get(key)
        if first is not None:
            return CyclicSchedule(tuple(picks[first:]), "kt")
        if len(seen) < state_cap:
            seen[key] = step + 1
    half = picks[len(picks) // 2 :] or picks
    msg = f"no repeated state within {max_steps} steps; returning the last {len(half)} probes"
    log.warning(msg)
    return CyclicSchedule(tuple(half), "kt", warning=msg)
