"""Detection times and the six SUM/MAX objectives.

Time is measured in probes and a detection time counts the detecting probe
itself, so a failure at a slot whose probe covers the element has detection
time 1 and a memoryless schedule has expected detection time ``1/Q_e``.
Failure epochs are cycle slots.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .errors import InstanceError
from .instance import Instance, WeightMode, normalize

INF = math.inf

SUM_OBJECTIVES = ("EeEt", "MtEe", "EeMt")
MAX_OBJECTIVES = ("MeEt", "EtMe", "MeMt")
OBJECTIVES = SUM_OBJECTIVES + MAX_OBJECTIVES
PROVENANCES = ("rtree", "kt", "setcover", "manual", "oracle")

IDLE = -1

_by_lower = {name.lower(): name for name in OBJECTIVES}


def objective_name(name: str) -> str:
    """Canonical spelling of an objective name (``eemt`` -> ``EeMt``)."""
    try:
        return _by_lower[name.lower()]
    except KeyError:
        raise InstanceError(f"unknown objective {name!r}; expected one of {', '.join(OBJECTIVES)}") from None


def objective_family(name: str) -> WeightMode:
    return WeightMode.SUM if objective_name(name) in SUM_OBJECTIVES else WeightMode.MAX


@dataclass(frozen=True)
class CyclicSchedule:
    """A finite sequence of test indices repeated forever. ``-1`` is an idle slot."""

    cycle: tuple[int, ...]
    provenance: str = "manual"
    warning: str | None = field(default=None, compare=False)

    def __post_init__(self):
        cyc = tuple(int(c) for c in self.cycle)
        if not cyc:
            raise InstanceError("a cycle needs at least one slot")
        if min(cyc) < IDLE:
            raise InstanceError("negative test index in cycle")
        if self.provenance not in PROVENANCES:
            raise InstanceError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "cycle", cyc)

    def __len__(self):
        return len(self.cycle)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.cycle, dtype=np.int64)

    def check(self, instance: Instance) -> None:
        if max(self.cycle) >= instance.m:
            raise InstanceError("cycle refers to a test the instance does not have")

    def uncovered(self, instance: Instance) -> list[int]:
        self.check(instance)
        seen = np.zeros(instance.n, dtype=bool)
        for i in set(self.cycle) - {IDLE}:
            seen[instance.tests[i]] = True
        return np.flatnonzero(~seen).tolist()

    def test_frequencies(self, m: int) -> np.ndarray:
        """Relative frequency of each test over the cycle (idle slots excluded)."""
        counts = np.bincount(self.array[self.array >= 0], minlength=m).astype(float)
        return counts / counts.sum()


@dataclass(frozen=True, eq=False)
class ObjectiveReport:
    EeEt: float
    MtEe: float
    EeMt: float
    MeEt: float
    EtMe: float
    MeMt: float
    mt: np.ndarray
    et: np.ndarray
    kind: str = "deterministic"
    ee_t: np.ndarray | None = None
    me_t: np.ndarray | None = None

    def __getitem__(self, name: str) -> float:
        return getattr(self, objective_name(name))

    def values(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in OBJECTIVES}

    @property
    def finite(self) -> bool:
        return all(math.isfinite(v) for v in self.values().values())

    @property
    def infinite_elements(self) -> list[int]:
        return np.flatnonzero(~np.isfinite(self.mt)).tolist()

    def chains_hold(self) -> bool:
        """Both objective chains: EeMt >= MtEe >= EeEt and MeMt >= EtMe >= MeEt."""
        return self.EeMt >= self.MtEe >= self.EeEt and self.MeMt >= self.EtMe >= self.MeEt


_observers: list[Callable[[ObjectiveReport], None]] = []


def observe(callback: Callable[[ObjectiveReport], None]) -> Callable[[], None]:
    """Call ``callback`` on every report built from now on; returns an unsubscribe function."""
    _observers.append(callback)
    return lambda: _observers.remove(callback)


def _emit(report: ObjectiveReport) -> ObjectiveReport:
    for cb in list(_observers):
        cb(report)
    return report


# relative slack within which rounding may invert two mathematically ordered values
_ROUNDING = 1e-12


def _not_above(value: float, bound: float) -> float:
    if value > bound and value - bound <= _ROUNDING * abs(bound):
        return bound
    return value


def _aggregate(weights, mt, tsum, ee, me, N):
    """The six objectives from per-element and per-slot data, for one weight vector."""
    et = tsum / N
    with np.errstate(invalid="ignore"):
        weighted_mt = weights * mt
        weighted_et = weights * et
    eemt = math.fsum(weighted_mt)
    eeet = math.fsum(weighted_et)
    mtee = float(ee.max())
    memt = float(weighted_mt.max())
    meet = float(weighted_et.max())
    etme = math.fsum(me) / N
    # Per-slot sums run in element order, the totals above are exactly rounded;
    # the two routes can disagree in the last bit.
    mtee = _not_above(mtee, eemt)
    eeet = _not_above(eeet, mtee)
    etme = _not_above(etme, memt)
    meet = _not_above(meet, etme)
    return dict(EeEt=eeet, MtEe=mtee, EeMt=eemt, MeEt=meet, EtMe=etme, MeMt=memt), et


def _family_weights(instance: Instance, normalized: bool):
    if not normalized:
        return instance.weights, instance.weights
    return (
        normalize(instance, WeightMode.SUM).weights,
        normalize(instance, WeightMode.MAX).weights,
    )


def _report_from_rows(instance, schedule, profile, normalized, keep_series, kind):
    """``profile(weights) -> (mt, tsum, ee, me)``."""
    N = len(schedule)
    wsum, wmax = _family_weights(instance, normalized)
    mt, tsum, ee, me = profile(wsum)
    values, et = _aggregate(wsum, mt, tsum, ee, me, N)
    series_ee, series_me = ee, me
    if wmax is not wsum:
        mt2, tsum2, ee2, me2 = profile(wmax)
        max_values, _ = _aggregate(wmax, mt2, tsum2, ee2, me2, N)
        for name in MAX_OBJECTIVES:
            values[name] = max_values[name]
        series_me = me2
    return _emit(
        ObjectiveReport(
            **values,
            mt=mt,
            et=et,
            kind=kind,
            ee_t=series_ee if keep_series else None,
            me_t=series_me if keep_series else None,
        )
    )


def evaluate(
    instance: Instance,
    schedule: CyclicSchedule,
    *,
    normalized: bool = False,
    keep_series: bool = False,
) -> ObjectiveReport:
    """Exact objectives of a cyclic deterministic schedule.

    Per element, the cyclic gaps ``g_j`` between consecutive probes covering
    it give ``Mt[e] = max g_j`` and ``Et[e] = sum g_j (g_j + 1) / (2N)``.
    Detection probabilities are ignored here (see :func:`evaluate_probabilistic`).

    With ``normalized`` the SUM family uses weights scaled to total one and the
    MAX family weights scaled to peak at one; otherwise the instance weights
    are used as they are.
    """
    schedule.check(instance)
    cycle = schedule.array

    def profile(weights):
        return kernels.deterministic_profile(
            cycle, instance.test_indptr, instance.test_indices, np.ascontiguousarray(weights)
        )

    return _report_from_rows(instance, schedule, profile, normalized, keep_series, "deterministic")


def _slot_probabilities(instance: Instance, cycle: np.ndarray) -> np.ndarray:
    """``n x N`` matrix: probability that the probe in slot t detects element e."""
    dense = np.zeros((instance.m + 1, instance.n))
    dense[:-1] = instance.coverage.toarray()
    # idle slots index the trailing all-zero row
    return dense[np.where(cycle >= 0, cycle, instance.m)].T.copy()


def evaluate_probabilistic(
    instance: Instance,
    schedule: CyclicSchedule,
    *,
    normalized: bool = False,
    keep_series: bool = False,
) -> ObjectiveReport:
    """Objectives of a cyclic schedule whose probes detect with probability ``pi``.

    From slot t the expected detection time is
    ``(sum_k k P_k + rho N) / (1 - rho)`` where ``P_k`` is the chance the k-th
    probe is the first to detect within one cycle and ``rho`` the chance a
    whole cycle misses. With all probabilities one this equals
    :func:`evaluate` bit for bit.
    """
    schedule.check(instance)
    probs = _slot_probabilities(instance, schedule.array)
    rows = [kernels.probabilistic_row(np.ascontiguousarray(probs[e])) for e in range(instance.n)]
    N = len(schedule)

    def profile(weights):
        mt = np.empty(instance.n)
        tsum = np.empty(instance.n)
        ee = np.zeros(N)
        me = np.zeros(N)
        for e, row in enumerate(rows):
            mt[e], tsum[e] = kernels.accumulate_row(row, float(weights[e]), ee, me)
        return mt, tsum, ee, me

    return _report_from_rows(instance, schedule, profile, normalized, keep_series, "probabilistic")


def cycle_percentile(instance: Instance, schedule: CyclicSchedule, level: float = 99) -> np.ndarray:
    """Per element, the ``level``-th percentile over slots of the (expected) detection time."""
    schedule.check(instance)
    probs = _slot_probabilities(instance, schedule.array)
    out = np.empty(instance.n)
    for e in range(instance.n):
        row = kernels.probabilistic_row(np.ascontiguousarray(probs[e]))
        out[e] = np.percentile(row, level, method="inverted_cdf")
    return out


def detection_time(instance: Instance, schedule: CyclicSchedule, e: int, t: int) -> float:
    """Probes from a failure of element ``e`` at slot ``t`` until a covering probe, inclusive."""
    N = len(schedule)
    if not 0 <= t < N:
        raise InstanceError(f"slot {t} outside cycle of length {N}")
    for h in range(N):
        test = schedule.cycle[(t + h) % N]
        if test >= 0 and e in instance.tests[test]:
            return h + 1
    return INF


def coverage_rates(instance: Instance, q) -> np.ndarray:
    """``Q_e = sum_i pi_ei q_i`` for every element."""
    return instance.coverage.T @ np.asarray(q, dtype=float)


def memoryless_report(instance: Instance, q, *, normalized: bool = False) -> ObjectiveReport:
    """Report for a memoryless schedule: every per-element time is ``1/Q_e``."""
    Q = coverage_rates(instance, q)
    with np.errstate(divide="ignore"):
        inv = np.where(Q > 0, 1.0 / np.where(Q > 0, Q, 1.0), INF)
    wsum, wmax = _family_weights(instance, normalized)
    total = math.fsum(wsum * inv)
    worst = float((wmax * inv).max())
    return _emit(
        ObjectiveReport(
            EeEt=total, MtEe=total, EeMt=total,
            MeEt=worst, EtMe=worst, MeMt=worst,
            mt=inv, et=inv.copy(), kind="memoryless",
        )
    )


def geometric_quantile(Q, level: float = 0.99):
    """Smallest k with P[Geometric(Q) <= k] >= level."""
    Q = np.asarray(Q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.ceil(np.log1p(-level) / np.log1p(-np.minimum(Q, 1.0)))
    k = np.where(Q >= 1.0, 1.0, k)
    return np.where(Q > 0, k, INF)


@dataclass(frozen=True)
class SimulationStats:
    samples: int
    mean: np.ndarray
    std: np.ndarray
    percentiles: dict

    def stderr(self) -> np.ndarray:
        return self.std / math.sqrt(self.samples)


def simulate_memoryless(
    instance: Instance,
    q,
    samples: int,
    seed: int = 0,
    percentiles: Sequence[float] = (50, 90, 99),
    batch: int = 8192,
) -> SimulationStats:
    """Monte-Carlo detection times of the memoryless schedule ``q``.

    Each sample draws a fresh i.i.d. probe sequence from ``q`` and records,
    for every element, the index of the first probe that detects it.
    """
    if samples < 1:
        raise InstanceError("samples must be positive")
    q = np.asarray(q, dtype=float)
    q = q / q.sum()
    rng = np.random.default_rng(seed)
    Q = coverage_rates(instance, q)
    dense = instance.coverage.toarray()
    probabilistic = instance.probabilistic
    live = np.flatnonzero(Q > 0)
    times = np.zeros((samples, instance.n))
    times[:, Q <= 0] = INF
    if live.size:
        qmin = float(Q[live].min())
        chunk = int(min(2048, max(16, math.ceil(3.0 / qmin))))
        for lo in range(0, samples, batch):
            hi = min(samples, lo + batch)
            pending = np.ones((hi - lo, live.size), dtype=bool)
            offset = 0
            while pending.any():
                rows = np.flatnonzero(pending.any(axis=1))
                draws = rng.choice(instance.m, size=(rows.size, chunk), p=q)
                for col, e in enumerate(live):
                    need = pending[rows, col]
                    if not need.any():
                        continue
                    r = rows[need]
                    hit = dense[draws[need], e]
                    if probabilistic:
                        hit = rng.random(hit.shape) < hit
                    else:
                        hit = hit > 0
                    found = hit.any(axis=1)
                    first = hit.argmax(axis=1)
                    times[lo + r[found], e] = offset + first[found] + 1
                    pending[r[found], col] = False
                offset += chunk
    finite = np.isfinite(times[0])
    mean = np.full(instance.n, INF)
    std = np.full(instance.n, INF)
    mean[finite] = times[:, finite].mean(axis=0)
    std[finite] = times[:, finite].std(axis=0, ddof=1) if samples > 1 else 0.0
    pct = {}
    for level in percentiles:
        vals = np.full(instance.n, INF)
        if finite.any():
            vals[finite] = np.percentile(times[:, finite], level, axis=0, method="inverted_cdf")
        pct[level] = vals
    return SimulationStats(samples, mean, std, pct)


# -- exports ---------------------------------------------------------------


def reverse_cdf(values: Iterable[float]) -> list[tuple[float, float]]:
    """``(value, fraction of entries >= value)`` for each distinct value, descending."""
    vals = np.asarray(list(values), dtype=float)
    if vals.size == 0:
        raise ValueError("reverse CDF of an empty sequence")
    if not np.all(np.isfinite(vals)):
        raise ValueError("reverse CDF needs finite values")
    distinct, counts = np.unique(vals, return_counts=True)
    at_least = np.cumsum(counts[::-1])
    return [(float(v), float(c) / vals.size) for v, c in zip(distinct[::-1], at_least)]


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def export_cdf(values: Iterable[float], path) -> None:
    rows = reverse_cdf(values)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["value", "fraction_of_elements_at_least"])
        for v, frac in rows:
            writer.writerow([_fmt(v), _fmt(frac)])


def write_report_csv(instance: Instance, report: ObjectiveReport, path, extra_rows=()) -> None:
    """One row per objective, one per element (Mt, Et), then ``extra_rows``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["type", "name", "value", "mt", "et"])
        for name, value in report.values().items():
            writer.writerow(["objective", name, _fmt(value), "", ""])
        for eid, mt, et in zip(instance.element_ids, report.mt, report.et):
            writer.writerow(["element", eid, "", _fmt(mt), _fmt(et)])
        for row in extra_rows:
            writer.writerow([row[0], row[1], _fmt(row[2]), "", ""])


def read_report_csv(path) -> dict:
    """Inverse of :func:`write_report_csv` (objectives and per-element rows)."""
    out = {"objectives": {}, "elements": {}, "extra": []}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["type"] == "objective":
                out["objectives"][row["name"]] = float(row["value"])
            elif row["type"] == "element":
                out["elements"][row["name"]] = (float(row["mt"]), float(row["et"]))
            else:
                out["extra"].append((row["type"], row["name"], float(row["value"])))
    return out


# -- schedule files ---------------------------------------------------------


def schedule_to_dict(instance: Instance, schedule: CyclicSchedule) -> dict:
    schedule.check(instance)
    return {
        "cycle": [None if c == IDLE else instance.test_ids[c] for c in schedule.cycle],
        "provenance": schedule.provenance,
    }


def schedule_from_dict(instance: Instance, doc: dict) -> CyclicSchedule:
    if not isinstance(doc, dict):
        raise InstanceError("schedule: expected an object")
    extra = set(doc) - {"cycle", "provenance"}
    if extra:
        raise InstanceError(f"schedule: unknown field(s) {sorted(extra)}")
    if "cycle" not in doc:
        raise InstanceError("schedule: missing field 'cycle'")
    try:
        cycle = [IDLE if c is None else instance.test_index(str(c)) for c in doc["cycle"]]
    except KeyError as exc:
        raise InstanceError(f"schedule refers to unknown test {exc.args[0]!r}") from None
    return CyclicSchedule(tuple(cycle), doc.get("provenance", "manual"))


def save_schedule(instance: Instance, schedule: CyclicSchedule, path) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(schedule_to_dict(instance, schedule), fh)
        fh.write("\n")


def load_schedule(instance: Instance, path) -> CyclicSchedule:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InstanceError(f"{path}: not valid JSON ({exc})") from None
    return schedule_from_dict(instance, doc)
