"""Tree schedules: power-of-two frequencies mapped onto binary-tree nodes.

A test at level ``L`` and offset ``o`` (``0 <= o < 2**L``) is probed at every
slot ``t`` with ``t mod 2**L == o``, i.e. at exact period ``2**L``. Node
``(L, o)`` has children ``(L+1, o)`` and ``(L+1, o + 2**L)``. A mapping is
usable when no test sits in the subtree of another (prefix-free), which is
always achievable when the Kraft sum ``sum_i 2**-L_i`` is at most one.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import kt as kt_mod
from .errors import InstanceError
from .evaluator import IDLE, CyclicSchedule, evaluate, objective_name
from .instance import Instance

log = logging.getLogger(__name__)

LEVEL_CAP = 20
FILL_POLICIES = ("kt", "noop")


@dataclass(frozen=True)
class TreeMapping:
    """Per-test ``(level, offset)``; level ``-1`` marks a test left out of the tree."""

    levels: tuple[int, ...]
    offsets: tuple[int, ...]

    def __post_init__(self):
        if len(self.levels) != len(self.offsets):
            raise InstanceError("levels and offsets must align")
        object.__setattr__(self, "levels", tuple(int(v) for v in self.levels))
        object.__setattr__(self, "offsets", tuple(int(v) for v in self.offsets))
        for lvl, off in zip(self.levels, self.offsets):
            if lvl >= 0 and not 0 <= off < 2**lvl:
                raise InstanceError(f"offset {off} outside level {lvl}")

    @property
    def max_level(self) -> int:
        return max((lvl for lvl in self.levels if lvl >= 0), default=0)

    def placed(self) -> list[int]:
        return [i for i, lvl in enumerate(self.levels) if lvl >= 0]

    def kraft(self) -> float:
        return sum(2.0**-lvl for lvl in self.levels if lvl >= 0)

    def prefix_free(self) -> bool:
        nodes = sorted((self.levels[i], self.offsets[i]) for i in self.placed())
        for a in range(len(nodes)):
            la, oa = nodes[a]
            for b in range(a + 1, len(nodes)):
                lb, ob = nodes[b]
                if ob % 2**la == oa:
                    return False
        return True


def round_frequencies(q, level_cap: int = LEVEL_CAP) -> tuple[int, ...]:
    """Level ``ceil(log2(1/q_i))`` per test, so ``2**-L_i <= q_i < 2**(1-L_i)``.

    Zero frequencies give level -1 (dropped). Levels above ``level_cap`` are
    clamped to it; if that pushes the Kraft sum over one, the tests with the
    smallest frequencies are dropped until it fits.
    """
    q = np.asarray(q, dtype=float)
    levels = []
    for i, qi in enumerate(q):
        if qi <= 0:
            levels.append(-1)
            continue
        lvl = max(0, math.ceil(-math.log2(qi)))
        # guard the rounding of log2 at exact powers of two
        while lvl > 0 and 2.0 ** -(lvl - 1) <= qi:
            lvl -= 1
        while 2.0**-lvl > qi:
            lvl += 1
        levels.append(min(lvl, level_cap))
    dropped = [i for i, qi in enumerate(q) if qi <= 0]
    if dropped:
        log.warning("dropping %d test(s) with zero frequency", len(dropped))
    kraft = sum(2.0**-lvl for lvl in levels if lvl >= 0)
    if kraft > 1.0:
        for i in sorted((i for i in range(len(q)) if levels[i] >= 0), key=lambda i: (q[i], -i)):
            kraft -= 2.0 ** -levels[i]
            levels[i] = -1
            log.warning("level cap %d: dropping test %d (q=%.3g)", level_cap, i, q[i])
            if kraft <= 1.0:
                break
    return tuple(levels)


def _check_kraft(levels) -> None:
    kraft = sum(2.0**-lvl for lvl in levels if lvl >= 0)
    if kraft > 1.0 + 1e-12:
        raise InstanceError(f"levels infeasible: Kraft sum {kraft} > 1")


def _assign(levels, choose) -> TreeMapping:
    """Place tests level by level; ``choose(free, k)`` picks ``k`` of the free offsets."""
    _check_kraft(levels)
    offsets = [0] * len(levels)
    by_level = {}
    for i, lvl in enumerate(levels):
        if lvl >= 0:
            by_level.setdefault(lvl, []).append(i)
    free = np.array([0], dtype=np.int64)
    depth = 0
    for lvl in sorted(by_level):
        while depth < lvl:
            free = np.concatenate([free, free + 2**depth])
            depth += 1
        tests = by_level[lvl]
        picked = choose(free, len(tests))
        for i, pos in zip(tests, picked):
            offsets[i] = int(free[pos])
        free = np.delete(free, picked)
    return TreeMapping(levels, offsets)


def map_random(levels, seed=0) -> TreeMapping:
    """Map tests of each level uniformly at random onto the free nodes of that level."""
    rng = np.random.default_rng(seed)
    return _assign(levels, lambda free, k: rng.choice(free.size, size=k, replace=False))


def map_canonical(levels) -> TreeMapping:
    """Deterministic mapping: ascending level, then ascending free offset, tests in index order."""

    def choose(free, k):
        order = np.argsort(free, kind="stable")
        return order[:k]

    return _assign(levels, choose)


def schedule_from_mapping(mapping: TreeMapping, N: int | None = None) -> tuple[int, ...]:
    """Level-``N`` cycle of length ``2**N``; slots no test claims are ``-1``."""
    if N is None:
        N = mapping.max_level
    if N < mapping.max_level:
        raise InstanceError(f"N = {N} below the deepest level {mapping.max_level}")
    cycle = np.full(2**N, IDLE, dtype=np.int64)
    for i in mapping.placed():
        cycle[mapping.offsets[i] :: 2 ** mapping.levels[i]] = i
    return tuple(cycle.tolist())


def fill_idle(instance: Instance, cycle, policy: str = "kt") -> tuple[int, ...]:
    """Give idle slots a test.

    ``kt`` picks, slot by slot, the test a Kuhn-Tucker step would choose given
    the elapsed time since each element was last covered in the (wrapped)
    cycle; ``noop`` leaves the slots idle.
    """
    if policy not in FILL_POLICIES:
        raise InstanceError(f"unknown fill policy {policy!r}")
    cycle = list(cycle)
    if policy == "noop" or IDLE not in cycle:
        return tuple(cycle)
    state = kt_mod.KTState.initial(instance)
    for c in cycle:  # one pass so the state reflects the wrap-around
        state.advance(instance, c)
    for t, c in enumerate(cycle):
        if c == IDLE:
            c = kt_mod.best_test(instance, state)
            cycle[t] = c
        state.advance(instance, c)
    return tuple(cycle)


def tree_schedule(
    instance: Instance, mapping: TreeMapping, N: int | None = None, fill: str = "kt"
) -> CyclicSchedule:
    cycle = fill_idle(instance, schedule_from_mapping(mapping, N), fill)
    return CyclicSchedule(cycle, "rtree")


def r_tree(
    instance: Instance,
    q,
    objective: str = "EeEt",
    trials: int = 32,
    seed: int = 0,
    fill: str = "kt",
    level_cap: int = LEVEL_CAP,
) -> CyclicSchedule:
    """Best of ``trials`` random tree schedules for ``objective``.

    Trial ``k`` uses its own generator derived from ``(seed, k)``; ties go to
    the lowest ``k``.
    """
    if trials < 1:
        raise InstanceError("trials must be positive")
    name = objective_name(objective)
    q = np.asarray(getattr(q, "q", q), dtype=float)
    if q.shape != (instance.m,):
        raise InstanceError("one frequency per test required")
    levels = round_frequencies(q, level_cap)
    best, best_value, best_k = None, math.inf, -1
    for k, child in enumerate(np.random.SeedSequence(seed).spawn(trials)):
        mapping = map_random(levels, np.random.default_rng(child))
        sched = tree_schedule(instance, mapping, None, fill)
        value = evaluate(instance, sched, normalized=True)[name]
        if best is None or value < best_value:
            best, best_value, best_k = sched, value, k
    log.debug("r_tree: trial %d best with %s = %g", best_k, name, best_value)
    missing = best.uncovered(instance)
    if missing:
        best = CyclicSchedule(best.cycle, "rtree", warning=f"{len(missing)} element(s) never probed")
    return best


# -- debug file -------------------------------------------------------------


def mapping_to_dict(instance: Instance, mapping: TreeMapping) -> dict:
    return {
        "tests": [
            {"id": instance.test_ids[i], "level": mapping.levels[i], "offset": mapping.offsets[i]}
            for i in mapping.placed()
        ]
    }


def mapping_from_dict(instance: Instance, doc: dict) -> TreeMapping:
    if not isinstance(doc, dict) or set(doc) != {"tests"}:
        raise InstanceError("mapping: expected exactly one field 'tests'")
    levels = [-1] * instance.m
    offsets = [0] * instance.m
    for entry in doc["tests"]:
        if set(entry) != {"id", "level", "offset"}:
            raise InstanceError("mapping entries need exactly 'id', 'level', 'offset'")
        i = instance.test_index(str(entry["id"]))
        levels[i] = int(entry["level"])
        offsets[i] = int(entry["offset"])
    return TreeMapping(tuple(levels), tuple(offsets))


def save_mapping(instance: Instance, mapping: TreeMapping, path) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(mapping_to_dict(instance, mapping), fh)
        fh.write("\n")
