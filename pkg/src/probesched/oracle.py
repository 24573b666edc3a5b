"""Brute-force ground truth for tiny instances."""
from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import InstanceError
from .evaluator import CyclicSchedule, evaluate, objective_name
from .instance import Instance, WeightMode, normalize

NODE_CAP = 2_000_000
GRID_MAX_TESTS = 4


def min_cover_size(instance: Instance) -> int:
    """Size of a minimum set cover, by exhaustive search over subsets."""
    masks = []
    for members in instance.tests:
        mask = 0
        for e in members.tolist():
            mask |= 1 << e
        masks.append(mask)
    full = (1 << instance.n) - 1
    for size in range(1, instance.m + 1):
        for combo in itertools.combinations(masks, size):
            acc = 0
            for mask in combo:
                acc |= mask
            if acc == full:
                return size
    raise InstanceError("tests do not cover every element")


def _is_canonical(word: tuple[int, ...]) -> bool:
    return all(word <= word[k:] + word[:k] for k in range(1, len(word)))


def det_optimum(
    instance: Instance,
    objective: str,
    max_len: int | None = None,
    node_cap: int = NODE_CAP,
) -> tuple[float, CyclicSchedule]:
    """Best cyclic schedule of length at most ``max_len`` for ``objective``.

    Cycles equal up to rotation are tried once (the lexicographically least
    rotation). Weights are used as given. ``max_len`` defaults to twice the
    minimum cover size.
    """
    name = objective_name(objective)
    if max_len is None:
        max_len = 2 * min_cover_size(instance)
    m = instance.m
    nodes = sum(m**length for length in range(1, max_len + 1))
    if nodes > node_cap:
        raise InstanceError(f"{nodes} cycles to enumerate exceeds cap {node_cap}")
    masks = [set(t.tolist()) for t in instance.tests]
    best_value, best = math.inf, None
    for length in range(1, max_len + 1):
        for word in itertools.product(range(m), repeat=length):
            if not _is_canonical(word):
                continue
            covered = set().union(*(masks[i] for i in set(word)))
            if len(covered) < instance.n:
                continue
            sched = CyclicSchedule(word, "oracle")
            value = evaluate(instance, sched)[name]
            if value < best_value:
                best_value, best = value, sched
    if best is None:
        raise InstanceError("no covering cycle within the length limit")
    return best_value, best


def memoryless_grid(instance: Instance, family: WeightMode | str, resolution: float = 0.01) -> float:
    """Smallest memoryless objective over the simplex grid with step ``resolution``.

    Weights are rescaled for the family first, as the solvers do.
    """
    family = WeightMode(family)
    m = instance.m
    if m > GRID_MAX_TESTS:
        raise InstanceError(f"grid search supports at most {GRID_MAX_TESTS} tests")
    steps = int(round(1.0 / resolution))
    if steps < 1:
        raise InstanceError("resolution must be at most 1")
    inst = normalize(instance, family)
    if m == 1:
        points = np.ones((1, 1))
    else:
        # all ways to split `steps` units among m tests (stars and bars)
        bars = np.array(list(itertools.combinations(range(steps + m - 1), m - 1)))
        edges = np.hstack([np.full((bars.shape[0], 1), -1), bars, np.full((bars.shape[0], 1), steps + m - 1)])
        points = (np.diff(edges, axis=1) - 1) / steps
    Q = points @ inst.coverage.toarray()
    with np.errstate(divide="ignore"):
        ratio = np.where(Q > 0, inst.weights / np.where(Q > 0, Q, 1.0), np.inf)
    values = ratio.sum(axis=1) if family is WeightMode.SUM else ratio.max(axis=1)
    return float(values.min())
