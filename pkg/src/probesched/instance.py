"""Scheduling instances: elements with priorities and tests covering them.

An :class:`Instance` is immutable. Element and test ids are opaque strings;
internally everything is addressed by dense integer indices in file order.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .errors import InstanceError

#: default cap on C(m, l) for :func:`gen_lowerbound`
LOWERBOUND_CAP = 200_000


class WeightMode(str, Enum):
    """How priorities are scaled: ``sum`` (total 1) or ``max`` (largest 1)."""

    SUM = "sum"
    MAX = "max"


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Instance:
    element_ids: tuple[str, ...]
    weights: np.ndarray
    test_ids: tuple[str, ...]
    tests: tuple[np.ndarray, ...]
    detect_prob: tuple[np.ndarray, ...] | None = None
    weight_mode: WeightMode | None = None
    _element_index: dict = field(init=False, repr=False, compare=False)
    _test_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        weights = _frozen(np.array(self.weights, dtype=float))
        if weights.shape != (len(self.element_ids),):
            raise InstanceError("one weight per element required")
        tests = []
        orders = []
        for members in self.tests:
            arr = np.asarray(members, dtype=np.int64).reshape(-1)
            order = np.argsort(arr, kind="stable")
            arr = arr[order]
            if arr.size and (arr[0] < 0 or arr[-1] >= len(self.element_ids)):
                raise InstanceError("test refers to an unknown element index")
            if np.any(arr[1:] == arr[:-1]):
                raise InstanceError("test lists an element twice")
            tests.append(_frozen(arr))
            orders.append(order)
        if len(tests) != len(self.test_ids):
            raise InstanceError("one id per test required")
        probs = None
        if self.detect_prob is not None:
            if len(self.detect_prob) != len(tests):
                raise InstanceError("detect_prob must align with tests")
            probs = []
            for arr, order, pi in zip(tests, orders, self.detect_prob):
                pi = np.array(pi, dtype=float).reshape(-1)
                if pi.shape != arr.shape:
                    raise InstanceError("detect_prob must align with test members")
                probs.append(_frozen(pi[order]))
            probs = tuple(probs)
        if len(set(self.element_ids)) != len(self.element_ids):
            raise InstanceError("duplicate element id")
        if len(set(self.test_ids)) != len(self.test_ids):
            raise InstanceError("duplicate test id")
        mode = WeightMode(self.weight_mode) if self.weight_mode is not None else None
        object.__setattr__(self, "element_ids", tuple(map(str, self.element_ids)))
        object.__setattr__(self, "test_ids", tuple(map(str, self.test_ids)))
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "tests", tuple(tests))
        object.__setattr__(self, "detect_prob", probs)
        object.__setattr__(self, "weight_mode", mode)
        object.__setattr__(self, "_element_index", {e: k for k, e in enumerate(self.element_ids)})
        object.__setattr__(self, "_test_index", {t: k for k, t in enumerate(self.test_ids)})

    @classmethod
    def from_ids(
        cls,
        weights: dict[str, float] | Sequence[tuple[str, float]],
        tests: dict[str, Iterable[str]] | Sequence[tuple[str, Iterable[str]]],
        detect_prob: dict[str, dict[str, float]] | None = None,
        weight_mode: WeightMode | str | None = None,
    ) -> "Instance":
        """Build from id-keyed mappings, keeping insertion order."""
        welems = list(weights.items()) if isinstance(weights, dict) else list(weights)
        tlist = list(tests.items()) if isinstance(tests, dict) else list(tests)
        eids = [e for e, _ in welems]
        index = {e: k for k, e in enumerate(eids)}
        members = []
        probs = [] if detect_prob is not None else None
        for tid, elems in tlist:
            elems = list(elems)
            try:
                idx = [index[e] for e in elems]
            except KeyError as exc:
                raise InstanceError(f"test {tid!r} refers to unknown element {exc.args[0]!r}") from None
            if len(set(idx)) != len(idx):
                raise InstanceError(f"test {tid!r} lists an element twice")
            members.append(idx)
            if probs is not None:
                tp = detect_prob.get(tid, {})
                unknown = set(tp) - set(elems)
                if unknown:
                    raise InstanceError(f"detect_prob of test {tid!r} names elements it does not cover")
                probs.append([tp.get(e, 1.0) for e in elems])
        return cls(
            element_ids=tuple(eids),
            weights=np.array([w for _, w in welems], dtype=float),
            test_ids=tuple(t for t, _ in tlist),
            tests=tuple(members),
            detect_prob=None if probs is None else tuple(probs),
            weight_mode=weight_mode,
        )

    @property
    def n(self) -> int:
        return len(self.element_ids)

    @property
    def m(self) -> int:
        return len(self.test_ids)

    @property
    def probabilistic(self) -> bool:
        return self.detect_prob is not None and any(np.any(pi != 1.0) for pi in self.detect_prob)

    def element_index(self, eid: str) -> int:
        return self._element_index[eid]

    def test_index(self, tid: str) -> int:
        return self._test_index[tid]

    def test_probs(self, i: int) -> np.ndarray:
        """Detection probabilities of test ``i`` aligned with ``tests[i]``."""
        if self.detect_prob is None:
            return np.ones(self.tests[i].size)
        return self.detect_prob[i]

    @cached_property
    def test_indptr(self) -> np.ndarray:
        return _frozen(np.concatenate([[0], np.cumsum([t.size for t in self.tests])]).astype(np.int64))

    @cached_property
    def test_indices(self) -> np.ndarray:
        if not self.tests:
            return _frozen(np.zeros(0, dtype=np.int64))
        return _frozen(np.concatenate(self.tests).astype(np.int64))

    @cached_property
    def test_data(self) -> np.ndarray:
        """Flattened detection probabilities aligned with :attr:`test_indices`."""
        return _frozen(np.concatenate([self.test_probs(i) for i in range(self.m)] or [np.zeros(0)]))

    @cached_property
    def coverage(self) -> sparse.csr_matrix:
        """``m x n`` matrix of detection probabilities (1 for deterministic tests)."""
        return sparse.csr_matrix(
            (self.test_data, self.test_indices, self.test_indptr), shape=(self.m, self.n)
        )

    @cached_property
    def cover_counts(self) -> np.ndarray:
        """Number of tests covering each element (``l_e``)."""
        counts = np.bincount(self.test_indices, minlength=self.n)
        return _frozen(counts.astype(np.int64))

    @property
    def max_cover_count(self) -> int:
        return int(self.cover_counts.max()) if self.n else 0

    def with_weights(self, weights, weight_mode=None) -> "Instance":
        return Instance(
            self.element_ids, np.asarray(weights, dtype=float), self.test_ids,
            self.tests, self.detect_prob, weight_mode,
        )

    def with_detect_prob(self, detect_prob) -> "Instance":
        return Instance(
            self.element_ids, self.weights, self.test_ids, self.tests,
            detect_prob, self.weight_mode,
        )

    def restrict_tests(self, test_ids: Iterable[str]) -> "Instance":
        """Sub-instance keeping only ``test_ids`` (in this instance's order)."""
        keep = set(test_ids)
        unknown = keep - set(self.test_ids)
        if unknown:
            raise InstanceError(f"unknown test ids: {sorted(unknown)[:5]}")
        idx = [i for i, t in enumerate(self.test_ids) if t in keep]
        return Instance(
            self.element_ids,
            self.weights,
            tuple(self.test_ids[i] for i in idx),
            tuple(self.tests[i] for i in idx),
            None if self.detect_prob is None else tuple(self.detect_prob[i] for i in idx),
            self.weight_mode,
        )

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        if (self.element_ids, self.test_ids, self.weight_mode) != (
            other.element_ids, other.test_ids, other.weight_mode
        ):
            return False
        if not np.array_equal(self.weights, other.weights):
            return False
        if any(not np.array_equal(a, b) for a, b in zip(self.tests, other.tests)):
            return False
        return all(
            np.array_equal(self.test_probs(i), other.test_probs(i)) for i in range(self.m)
        )

    __hash__ = None


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        return "OK" if self.ok else "; ".join(self.violations)


def validate(instance: Instance) -> ValidationReport:
    """Collect every violation of the instance invariants."""
    problems = []
    for k, eid in enumerate(instance.element_ids):
        if not instance.weights[k] > 0 or not math.isfinite(instance.weights[k]):
            problems.append(f"element {eid} has non-positive weight {instance.weights[k]!r}")
    covered = np.zeros(instance.n, dtype=bool)
    for i, tid in enumerate(instance.test_ids):
        members = instance.tests[i]
        if members.size == 0:
            problems.append(f"empty test {tid}")
            continue
        pi = instance.test_probs(i)
        bad = ~((pi > 0) & (pi <= 1))
        for e in members[bad]:
            problems.append(
                f"detect_prob of test {tid} on element {instance.element_ids[e]} out of range (0, 1]"
            )
        covered[members[pi > 0]] = True
    for e in np.flatnonzero(~covered):
        problems.append(f"element {instance.element_ids[e]} uncovered")
    return ValidationReport(tuple(problems))


def normalize(instance: Instance, mode: WeightMode | str) -> Instance:
    """Rescale weights so they sum to one (``sum``) or peak at one (``max``)."""
    mode = WeightMode(mode)
    w = instance.weights
    scale = w.sum() if mode is WeightMode.SUM else w.max(initial=0.0)
    if not scale > 0:
        raise InstanceError("cannot normalize all-zero weights")
    if np.any(w <= 0):
        raise InstanceError("weights must be positive")
    return instance.with_weights(w / scale, mode)


def _resolve_weights(n: int, weights) -> np.ndarray:
    if weights is None or (isinstance(weights, str) and weights == "uniform"):
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise InstanceError(f"expected {n} weights, got {w.size}")
    return w


def gen_singletons(n: int, weights=None, weight_mode: WeightMode | str | None = None) -> Instance:
    """``n`` elements, each with its own single-element test."""
    if n < 1:
        raise InstanceError("n must be positive")
    w = _resolve_weights(n, weights)
    inst = Instance(
        tuple(f"e{k + 1}" for k in range(n)),
        w,
        tuple(f"t{k + 1}" for k in range(n)),
        tuple(np.array([k]) for k in range(n)),
    )
    return normalize(inst, weight_mode) if weight_mode is not None else inst


def _digits(x: int, base: int, width: int) -> tuple[int, ...]:
    return tuple((x // base**d) % base for d in range(width))


def _word(digits: Sequence[int]) -> str:
    return "".join(map(str, reversed(digits))) or "-"


def clos_links(levels: int, radix: int) -> list[tuple[str, str]]:
    """Links of the k-ary folded Clos (``levels`` switch tiers), as node-name pairs."""
    if levels < 2 or radix < 2:
        raise InstanceError("folded Clos needs levels >= 2 and radix >= 2")
    width = levels - 1
    nsw = radix**width
    links = []
    for w in range(nsw):
        wd = _digits(w, radix, width)
        for h in range(radix):
            links.append((f"h{w * radix + h}", f"s1.{_word(wd)}"))
    for lvl in range(1, levels):
        for w in range(nsw):
            wd = list(_digits(w, radix, width))
            for v in range(radix):
                up = wd.copy()
                up[lvl - 1] = v
                links.append((f"s{lvl}.{_word(wd)}", f"s{lvl + 1}.{_word(up)}"))
    return links


def gen_clos(levels: int, radix: int, weights=None) -> Instance:
    """Folded Clos fabric: elements are links, tests are all minimal up/down routes.

    Construction (a k-ary L-tree with k = ``radix``, L = ``levels``):
    ``radix**levels`` endpoints; every tier holds ``radix**(levels-1)`` switches
    named by a word of ``levels-1`` base-``radix`` digits. A tier-``l`` switch
    has ``radix`` up-links, one to each tier-``l+1`` switch whose word differs
    from its own only in digit ``l-1``; endpoint ``p`` hangs off tier-1 switch
    ``p // radix``. Endpoints ``a < b`` meet first at tier ``l``, one above the
    highest digit where their tier-1 words differ; each of the
    ``radix**(l-1)`` choices of meeting switch gives one test (the links of
    that route, including both endpoint links).
    """
    links = clos_links(levels, radix)
    index = {}
    for k, (u, v) in enumerate(links):
        index[(u, v)] = k
    width = levels - 1
    nsw = radix**width
    hosts = radix * nsw
    test_ids = []
    tests = []
    for a, b in itertools.combinations(range(hosts), 2):
        wa = _digits(a // radix, radix, width)
        wb = _digits(b // radix, radix, width)
        diff = [d for d in range(width) if wa[d] != wb[d]]
        meet = (max(diff) + 2) if diff else 1
        base = [index[(f"h{a}", f"s1.{_word(wa)}")], index[(f"h{b}", f"s1.{_word(wb)}")]]
        for r, choice in enumerate(itertools.product(range(radix), repeat=meet - 1)):
            route = list(base)
            for side in (wa, wb):
                cur = list(side)
                for lvl in range(1, meet):
                    nxt = cur.copy()
                    nxt[lvl - 1] = choice[lvl - 1]
                    route.append(index[(f"s{lvl}.{_word(cur)}", f"s{lvl + 1}.{_word(nxt)}")])
                    cur = nxt
            test_ids.append(f"h{a}-h{b}/r{r}")
            tests.append(np.array(sorted(route)))
    if not tests:
        raise InstanceError("folded Clos parameters yield no paths")
    n = len(links)
    return Instance(
        tuple(f"{u}~{v}" for u, v in links),
        _resolve_weights(n, weights),
        tuple(test_ids),
        tuple(tests),
    )


def gen_lowerbound(m: int, ell: int, cap: int = LOWERBOUND_CAP) -> Instance:
    """One element per ``ell``-subset of ``m`` tests, covered by exactly those tests."""
    if not (1 <= ell and 2 * ell <= m):
        raise InstanceError("need 1 <= ell <= m/2")
    n = math.comb(m, ell)
    if n > cap:
        raise InstanceError(f"C({m},{ell}) = {n} exceeds size cap {cap}")
    subsets = list(itertools.combinations(range(m), ell))
    members = [[] for _ in range(m)]
    for k, sub in enumerate(subsets):
        for j in sub:
            members[j].append(k)
    return Instance(
        tuple("e" + "_".join(str(j + 1) for j in sub) for sub in subsets),
        np.full(n, 1.0 / n),
        tuple(f"t{j + 1}" for j in range(m)),
        tuple(np.array(mem) for mem in members),
    )


def gen_random(
    n: int,
    m: int,
    density: float = 0.3,
    seed: int = 0,
    weight_range: tuple[float, float] = (0.1, 1.0),
    weight_mode: WeightMode | str | None = WeightMode.SUM,
) -> Instance:
    """Random tests: each (test, element) pair kept with probability ``density``.

    Empty tests get one random element and every uncovered element is added
    to a random test, so the result always validates.
    """
    if n < 1 or m < 1:
        raise InstanceError("n and m must be positive")
    rng = np.random.default_rng(seed)
    incidence = rng.random((m, n)) < density
    for i in np.flatnonzero(~incidence.any(axis=1)):
        incidence[i, rng.integers(n)] = True
    for e in np.flatnonzero(~incidence.any(axis=0)):
        incidence[rng.integers(m), e] = True
    lo, hi = weight_range
    w = rng.uniform(lo, hi, size=n)
    inst = Instance(
        tuple(f"e{k + 1}" for k in range(n)),
        w,
        tuple(f"t{i + 1}" for i in range(m)),
        tuple(np.flatnonzero(row) for row in incidence),
    )
    return normalize(inst, weight_mode) if weight_mode is not None else inst


# -- file format ------------------------------------------------------------

_TOP_KEYS = {"weight_mode", "elements", "tests"}
_ELEMENT_KEYS = {"id", "weight"}
_TEST_KEYS = {"id", "elements", "detect_prob"}


def _check_keys(obj, allowed: set, required: set, where: str):
    if not isinstance(obj, dict):
        raise InstanceError(f"{where}: expected an object")
    extra = set(obj) - allowed
    if extra:
        raise InstanceError(f"{where}: unknown field(s) {sorted(extra)}")
    missing = required - set(obj)
    if missing:
        raise InstanceError(f"{where}: missing field(s) {sorted(missing)}")


def instance_from_dict(doc: dict) -> Instance:
    """Parse the instance document; weights are rescaled to the declared mode."""
    _check_keys(doc, _TOP_KEYS, _TOP_KEYS - {"weight_mode"}, "instance")
    mode = doc.get("weight_mode", "sum")
    try:
        mode = WeightMode(mode)
    except ValueError:
        raise InstanceError(f"weight_mode must be 'sum' or 'max', got {mode!r}") from None
    weights = []
    for k, el in enumerate(doc["elements"]):
        _check_keys(el, _ELEMENT_KEYS, _ELEMENT_KEYS, f"elements[{k}]")
        weights.append((str(el["id"]), float(el["weight"])))
    tests = []
    probs = {}
    for k, t in enumerate(doc["tests"]):
        _check_keys(t, _TEST_KEYS, {"id", "elements"}, f"tests[{k}]")
        tests.append((str(t["id"]), [str(e) for e in t["elements"]]))
        if "detect_prob" in t:
            probs[str(t["id"])] = {str(e): float(v) for e, v in t["detect_prob"].items()}
    inst = Instance.from_ids(weights, tests, probs or None)
    if np.any(inst.weights <= 0):
        # leave unnormalized so validate() can name the offending elements
        return inst
    return normalize(inst, mode)


def instance_to_dict(instance: Instance) -> dict:
    if instance.weight_mode is None:
        instance = normalize(instance, WeightMode.SUM)
    tests = []
    for i, tid in enumerate(instance.test_ids):
        entry = {"id": tid, "elements": [instance.element_ids[e] for e in instance.tests[i]]}
        if instance.detect_prob is not None:
            pi = instance.detect_prob[i]
            if np.any(pi != 1.0):
                entry["detect_prob"] = {
                    instance.element_ids[e]: float(v) for e, v in zip(instance.tests[i], pi)
                }
        tests.append(entry)
    return {
        "weight_mode": instance.weight_mode.value,
        "elements": [
            {"id": e, "weight": float(w)} for e, w in zip(instance.element_ids, instance.weights)
        ],
        "tests": tests,
    }


def load_instance(path) -> Instance:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InstanceError(f"{path}: not valid JSON ({exc})") from None
    return instance_from_dict(doc)


def save_instance(instance: Instance, path) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(instance_to_dict(instance), fh, indent=1)
        fh.write("\n")
