"""Optimal memoryless probing frequencies.

SUM objectives: minimize ``sum_e p_e / Q_e`` over the simplex, where
``Q_e = sum_i pi_ei q_i``. MAX objectives: maximize ``min_e Q_e / p_e``.
"""
from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import ConvergenceError, InstanceError
from .evaluator import coverage_rates
from .instance import Instance, WeightMode, normalize

log = logging.getLogger(__name__)

ACTIVE_EPS = 1e-9


@dataclass(frozen=True)
class SolveConfig:
    tolerance: float = 1e-6
    max_iterations: int = 50_000
    seed: int = 0  # reserved; both solvers are deterministic

    def __post_init__(self):
        if not self.tolerance > 0:
            raise InstanceError("tolerance must be positive")
        if self.max_iterations < 1:
            raise InstanceError("max_iterations must be positive")


@dataclass(frozen=True, eq=False)
class Frequencies:
    """A distribution over the tests of an instance, i.e. a memoryless schedule."""

    test_ids: tuple[str, ...]
    q: np.ndarray
    value: float | None = None
    family: WeightMode | None = None
    kkt: float | None = None
    iterations: int = 0
    converged: bool = True
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.shape != (len(self.test_ids),):
            raise InstanceError("one frequency per test required")
        if np.any(q < 0) or not math.isclose(q.sum(), 1.0, abs_tol=1e-9):
            raise InstanceError("frequencies must be a probability distribution")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "test_ids", tuple(self.test_ids))

    def aligned(self, instance: Instance) -> np.ndarray:
        """Frequencies in the instance's test order (absent tests get zero)."""
        if self.test_ids == instance.test_ids:
            return self.q
        out = np.zeros(instance.m)
        for tid, v in zip(self.test_ids, self.q):
            try:
                out[instance.test_index(tid)] = v
            except KeyError:
                raise InstanceError(f"frequency for unknown test {tid!r}") from None
        return out

    def __eq__(self, other):
        if not isinstance(other, Frequencies):
            return NotImplemented
        return self.test_ids == other.test_ids and np.array_equal(self.q, other.q)

    __hash__ = None


def _uncovered(instance: Instance) -> np.ndarray:
    reach = np.asarray(instance.coverage.sum(axis=0)).ravel()
    return np.flatnonzero(reach <= 0)


def _require_covered(instance: Instance) -> None:
    bad = _uncovered(instance)
    if bad.size:
        names = ", ".join(instance.element_ids[e] for e in bad[:5])
        raise InstanceError(f"element(s) {names} uncovered; objective is infinite")


def eval_memoryless(instance: Instance, q):
    """``(sum_e p_e/Q_e, max_e p_e/Q_e, Q)`` with the instance weights as given."""
    Q = coverage_rates(instance, q)
    if np.any(Q <= 0):
        return math.inf, math.inf, Q
    ratio = instance.weights / Q
    return math.fsum(ratio), float(ratio.max()), Q


def balance_values(instance: Instance, q) -> np.ndarray:
    """Partial derivatives ``r_i = -sum_e pi_ei p_e / Q_e^2`` of the SUM objective."""
    Q = coverage_rates(instance, q)
    return -(instance.coverage @ (instance.weights / Q**2))


def kkt_residual(instance: Instance, q, eps: float = ACTIVE_EPS) -> float:
    """Relative violation of the optimality conditions of the SUM program.

    Active tests (``q_i > eps``) must share one balance value; an inactive
    test must not be steeper than the active ones. Both gaps are scaled by
    ``max_k |r_k|``.
    """
    q = np.asarray(q, dtype=float)
    if np.any(coverage_rates(instance, q) <= 0):
        return math.inf
    r = balance_values(instance, q)
    scale = float(np.abs(r).max())
    if scale == 0:
        return 0.0
    active = q > eps
    if not active.any():
        return math.inf
    ra = r[active]
    spread = float(ra.max() - ra.min())
    slack = 0.0
    if (~active).any():
        slack = max(0.0, float(ra.min() - r[~active].min()))
    return max(spread, slack) / scale


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / k > 0)[-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _prepare(instance: Instance, mode: WeightMode, subset):
    inst = normalize(instance, mode)
    work = inst.restrict_tests(subset) if subset is not None else inst
    _require_covered(work)
    return inst, work


def _expand(inst: Instance, work: Instance, q: np.ndarray) -> np.ndarray:
    if work is inst:
        return q
    out = np.zeros(inst.m)
    for tid, v in zip(work.test_ids, q):
        out[inst.test_index(tid)] = v
    return out


def solve_sum(instance: Instance, config: SolveConfig = SolveConfig(), subset=None) -> Frequencies:
    """Optimal memoryless frequencies for the SUM objectives.

    Spectral projected gradient with a non-monotone Armijo line search,
    starting from uniform frequencies. The objective is infinite whenever an
    element loses all coverage, so rejected trial points act as a barrier.
    Weights are rescaled to sum to one first. ``subset`` restricts the
    candidate tests (the others get frequency zero).
    """
    inst, work = _prepare(instance, WeightMode.SUM, subset)
    A = work.coverage.tocsr()
    AT = A.T.tocsr()
    p = work.weights
    m = work.m
    tol = config.tolerance

    def objective(q):
        Q = AT @ q
        if Q.min() <= 0:
            return math.inf, Q
        return float(np.sum(p / Q)), Q

    q = np.full(m, 1.0 / m)
    f, Q = objective(q)
    if m == 1:
        return _frequencies(inst, work, q, 0, True, tol)
    g = -(A @ (p / Q**2))
    alpha = 1.0 / max(float(np.abs(g).max()), 1e-300)
    recent = deque([f], maxlen=10)
    history = deque([f], maxlen=11)
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        d = project_simplex(q - alpha * g) - q
        gtd = float(g @ d)
        if gtd >= 0:
            # projected step is not a descent direction: stationary to machine precision
            converged = kkt_residual(work, q) <= tol
            break
        fmax = max(recent)
        lam = 1.0
        while True:
            trial = q + lam * d
            ft, Qt = objective(trial)
            if ft <= fmax + 1e-4 * lam * gtd:
                break
            lam *= 0.5
            if lam < 1e-16:
                break
        if lam < 1e-16:
            converged = kkt_residual(work, q) <= tol
            break
        gt = -(A @ (p / Qt**2))
        s = trial - q
        y = gt - g
        sty = float(s @ y)
        alpha = float(s @ s) / sty if sty > 0 else 1e12
        alpha = min(max(alpha, 1e-12), 1e12)
        q, f, g = trial, ft, gt
        recent.append(f)
        history.append(f)
        if len(history) == history.maxlen:
            change = abs(history[0] - f) / abs(f)
            if change <= tol and kkt_residual(work, q) <= tol:
                converged = True
                break
    result = _frequencies(inst, work, q, it, converged, tol)
    if not converged:
        raise ConvergenceError(
            f"SUM solver stopped after {it} iterations (KKT residual {result.kkt:.3g})", result
        )
    return result


def _frequencies(inst, work, q, iterations, converged, tol) -> Frequencies:
    q = np.maximum(q, 0.0)
    q = q / q.sum()
    value, _, _ = eval_memoryless(work, q)
    return Frequencies(
        inst.test_ids,
        _expand(inst, work, q),
        value=value,
        family=WeightMode.SUM,
        kkt=kkt_residual(work, q),
        iterations=iterations,
        converged=converged,
        info={"tolerance": tol},
    )


def solve_max(instance: Instance, config: SolveConfig = SolveConfig(), subset=None) -> Frequencies:
    """Optimal memoryless frequencies for the MAX objectives, by linear programming.

    Maximizes ``z`` subject to ``sum_i pi_ei q_i >= z p_e`` on the simplex,
    after rescaling weights to peak at one. The reported value is
    ``max_e p_e / Q_e`` recomputed from the returned frequencies.
    """
    inst, work = _prepare(instance, WeightMode.MAX, subset)
    m, n = work.m, work.n
    p = work.weights
    c = np.zeros(m + 1)
    c[-1] = -1.0
    a_ub = sparse.hstack([-work.coverage.T.tocsr(), sparse.csr_matrix(p.reshape(-1, 1))]).tocsr()
    a_eq = sparse.csr_matrix(np.append(np.ones(m), 0.0).reshape(1, -1))
    res = linprog(
        c,
        A_ub=a_ub,
        b_ub=np.zeros(n),
        A_eq=a_eq,
        b_eq=[1.0],
        bounds=[(0, None)] * (m + 1),
        method="highs",
        options={
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
            "maxiter": config.max_iterations,
        },
    )
    if res.status != 0:
        raise ConvergenceError(f"MAX linear program failed: {res.message}")
    q = np.maximum(res.x[:m], 0.0)
    q = q / q.sum()
    _, value, _ = eval_memoryless(work, q)
    z = -res.fun
    gap = abs(value * z - 1.0) if z > 0 else math.inf
    if not gap <= config.tolerance:
        raise ConvergenceError(f"MAX program solution off by {gap:.3g} relative")
    return Frequencies(
        inst.test_ids,
        _expand(inst, work, q),
        value=value,
        family=WeightMode.MAX,
        iterations=int(getattr(res, "nit", 0)),
        converged=True,
        info={"lp_value": 1.0 / z, "tolerance": config.tolerance},
    )


def uniform_frequencies(instance: Instance, test_indices=None) -> Frequencies:
    """Equal frequency on every test, or on ``test_indices`` only."""
    q = np.zeros(instance.m)
    if test_indices is None:
        q[:] = 1.0 / instance.m
    else:
        idx = sorted(set(int(i) for i in test_indices if i >= 0))
        q[idx] = 1.0 / len(idx)
    return Frequencies(instance.test_ids, q)


# -- file format ------------------------------------------------------------


def _sig12(x: float) -> float:
    return float(f"{x:.12g}")


def frequencies_to_dict(freqs: Frequencies) -> dict:
    return {"test_ids": list(freqs.test_ids), "q": [_sig12(v) for v in freqs.q]}


def frequencies_from_dict(doc: dict) -> Frequencies:
    if not isinstance(doc, dict):
        raise InstanceError("frequencies: expected an object")
    extra = set(doc) - {"test_ids", "q"}
    if extra:
        raise InstanceError(f"frequencies: unknown field(s) {sorted(extra)}")
    if set(doc) != {"test_ids", "q"}:
        raise InstanceError("frequencies: need both 'test_ids' and 'q'")
    if len(doc["test_ids"]) != len(doc["q"]):
        raise InstanceError("frequencies: 'test_ids' and 'q' differ in length")
    return Frequencies(tuple(str(t) for t in doc["test_ids"]), [float(v) for v in doc["q"]])


def save_frequencies(freqs: Frequencies, path) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(frequencies_to_dict(freqs), fh)
        fh.write("\n")


def load_frequencies(path) -> Frequencies:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InstanceError(f"{path}: not valid JSON ({exc})") from None
    return frequencies_from_dict(doc)
