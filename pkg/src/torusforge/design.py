"""Search for low-curvature isometric invariant subtori.

A candidate is a set of integer frequencies; nonnegative weights r_k^2 come
from a linear program enforcing sum r_k^2 w_k w_k^T = I (optionally also
isotropy of the quartic form), and the candidate is scored by the
scale-invariant product curv * R. The excess of the best product over
sqrt(3n/(n+2)) is the empirical Delta(n, N).
"""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog

from .curvature import (
    CurvatureConfig,
    CurvatureReport,
    QuarticForm,
    _multiplicities,
    curv,
    multi_indices,
    petrunin_bound,
)
from .immersion import FrequencySpec, enclosing_radius

SEARCH_CURV = CurvatureConfig(use_oracle=False, starts=32)
LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-9}


class LPSolverError(RuntimeError):
    """The LP solver failed for a reason other than infeasibility."""


def worker_count() -> int:
    try:
        cap = int(os.environ.get("FORGE_THREADS", "0"))
    except ValueError:
        cap = 0
    avail = os.cpu_count() or 1
    return max(1, min(cap, avail) if cap > 0 else avail)


def canonical(w) -> tuple[int, ...]:
    """Representative of {w, -w}: first nonzero entry positive."""
    w = tuple(int(x) for x in w)
    for x in w:
        if x:
            return w if x > 0 else tuple(-y for y in w)
    return w


def frequency_pool(n: int, policy: str = "norm", bound: int = 25) -> list[tuple[int, ...]]:
    """Nonzero integer vectors up to sign, sorted by (squared norm, entries).

    ``sign``: entries in {-1, 0, 1}. ``norm``: squared norm at most ``bound``.
    """
    if policy == "sign":
        ranges = [range(-1, 2)] * n
    elif policy == "norm":
        b = int(math.isqrt(bound))
        ranges = [range(-b, b + 1)] * n
    else:
        raise ValueError(f"unknown pool policy {policy!r}")
    seen = set()
    for w in itertools.product(*ranges):
        if any(w) and (policy == "sign" or sum(x * x for x in w) <= bound):
            seen.add(canonical(w))
    return sorted(seen, key=lambda w: (sum(x * x for x in w), w))


@dataclass
class WeightSolution:
    status: str  # "optimal" | "infeasible"
    weights: np.ndarray | None = None
    isotropy_constant: float | None = None
    residual: float = math.inf

    @property
    def feasible(self) -> bool:
        return self.status == "optimal"

    @property
    def R2(self) -> float:
        return float(np.sum(self.weights)) if self.feasible else math.inf


def _moment_rows(W: np.ndarray, isotropic: bool):
    n = W.shape[1]
    iu, ju = np.triu_indices(n)
    A2 = (W[:, iu] * W[:, ju]).T
    b2 = (iu == ju).astype(float)
    if not isotropic:
        return A2, b2, 0
    idx = multi_indices(n)
    mult = _multiplicities(n)
    A4 = np.array([[mult[a] * np.prod(w[list(ix)]) for w in W] for a, ix in enumerate(idx)])
    iso = QuarticForm.norm4(n).poly_coeffs()
    A4 = np.hstack([A4, -iso[:, None]])
    scale = np.max(np.abs(A4), axis=1, keepdims=True)
    A4 /= np.where(scale > 0, scale, 1.0)
    A2 = np.hstack([A2, np.zeros((A2.shape[0], 1))])
    return np.vstack([A2, A4]), np.concatenate([b2, np.zeros(len(idx))]), 1


def solve_weights(frequencies, isotropic: bool = False) -> WeightSolution:
    """Minimize sum r_k^2 subject to sum r_k^2 w_k w_k^T = I, r_k^2 >= 0.

    With ``isotropic`` the quartic form sum r_k^2 <w_k, u>^4 must also equal
    c |u|^4 for some free c. The HiGHS vertex is polished by re-solving the
    equalities on its support, bringing residuals to ~1e-15.
    """
    W = np.atleast_2d(np.asarray(frequencies, dtype=float))
    K, n = W.shape
    if K < n:
        raise ValueError("need at least n candidate frequencies")
    A, b, extra = _moment_rows(W, isotropic)
    c = np.concatenate([np.ones(K), np.zeros(extra)])
    bounds = [(0, None)] * K + [(None, None)] * extra
    res = linprog(c, A_eq=A, b_eq=b, bounds=bounds, method="highs-ds", options=LP_OPTIONS)
    if res.status == 2:
        return WeightSolution("infeasible")
    if res.status != 0:
        raise LPSolverError(f"LP failed (status {res.status}): {res.message}")
    x = res.x.copy()
    x[:K][x[:K] < 1e-13] = 0.0
    support = np.concatenate([np.flatnonzero(x[:K] > 0), np.arange(K, K + extra)])
    sol, *_ = np.linalg.lstsq(A[:, support], b, rcond=None)
    polished = np.zeros_like(x)
    polished[support] = sol
    if np.all(polished[:K] >= 0) and np.max(np.abs(A @ polished - b)) <= np.max(np.abs(A @ x - b)):
        x = polished
    W_res = np.einsum("k,ki,kj->ij", x[:K], W, W) - np.eye(n)
    residual = float(np.max(np.abs(W_res)))
    if residual > 1e-9:
        raise LPSolverError(f"LP solution violates the metric constraint by {residual:.3g}")
    return WeightSolution("optimal", x[:K], float(x[K]) if extra else None, residual)


def spec_from_weights(frequencies, weights, seed: int = 0) -> FrequencySpec:
    """Spec over the support of ``weights``; phases are a seeded uniform draw."""
    W = np.atleast_2d(np.asarray(frequencies, dtype=np.int64))
    weights = np.asarray(weights, dtype=float)
    keep = weights > 0
    return FrequencySpec.from_modes(W[keep], np.sqrt(weights[keep]), seed=seed)


@dataclass(frozen=True)
class DesignSearchProblem:
    n: int
    K_max: int
    pool: str = "norm"
    norm_bound: int = 25
    objective: str = "product"  # "product" | "isotropy"
    seed: int = 0
    budget: int = 10_000
    T0: float = 1.0
    alpha: float = 0.995
    stagnation: int = 500
    chains: int = 1
    neighbors: int = 3
    explore: float = 0.2

    def candidates(self) -> list[tuple[int, ...]]:
        pool = frequency_pool(self.n, self.pool, self.norm_bound)
        if not pool or np.linalg.matrix_rank(np.array(pool, dtype=float)) < self.n:
            raise ValueError("candidate pool does not contain n independent vectors")
        return pool


@dataclass
class DesignSearchResult:
    n: int
    K_max: int
    frequencies: list
    weights: np.ndarray
    product: float
    delta_hat: float
    report: CurvatureReport | None
    seed: int
    iterations: int
    found: bool = True
    method: str = "anneal"
    spec: FrequencySpec | None = field(default=None, repr=False)

    @property
    def K(self) -> int:
        return len(self.frequencies)

    def key(self):
        return (self.product, tuple(self.frequencies))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "K_max": self.K_max,
            "found": self.found,
            "frequencies": [list(w) for w in self.frequencies],
            "weights": [float(x) for x in self.weights],
            "product": self.product,
            "delta_hat": self.delta_hat,
            "curvature": self.report.to_dict() if self.report else None,
            "seed": self.seed,
            "iterations": self.iterations,
            "method": self.method,
            "spec": self.spec.to_dict() if self.spec else None,
        }


class _Scorer:
    """Memoized candidate scoring: best product over the two weight programs."""

    def __init__(self, problem: DesignSearchProblem, pool):
        self.problem = problem
        self.pool = pool
        self.cache: dict[tuple[int, ...], tuple] = {}

    def __call__(self, subset: tuple[int, ...]):
        if subset in self.cache:
            return self.cache[subset]
        freqs = [self.pool[k] for k in subset]
        best = (math.inf, None, None)
        for iso in (False, True):
            sol = solve_weights(freqs, iso)
            if not sol.feasible:
                continue
            spec = spec_from_weights(freqs, sol.weights, self.problem.seed)
            rep = curv(spec, SEARCH_CURV)
            product = rep.curv * enclosing_radius(spec)
            if self.problem.objective == "isotropy":
                Q = QuarticForm.from_spec(spec)
                lo = -curv_value_min(Q)
                score = (rep.value - lo) / (2.0 * rep.value)
            else:
                score = product
            if score < best[0]:
                best = (score, sol.weights, freqs)
        self.cache[subset] = best
        return best


def curv_value_min(Q: QuarticForm) -> float:
    from .curvature import max_on_sphere

    return max_on_sphere(-Q, None, SEARCH_CURV).value


def _finalize(problem, freqs, weights, iterations, method) -> DesignSearchResult:
    keep = np.asarray(weights) > 0
    freqs = [tuple(f) for f, k in zip(freqs, keep) if k]
    weights = np.asarray(weights)[keep]
    order = sorted(range(len(freqs)), key=lambda k: freqs[k])
    freqs = [freqs[k] for k in order]
    weights = weights[order]
    spec = spec_from_weights(freqs, weights, problem.seed)
    rep = curv(spec)
    product = rep.curv * enclosing_radius(spec)
    return DesignSearchResult(problem.n, problem.K_max, freqs, weights, product,
                              product - petrunin_bound(problem.n), rep, problem.seed,
                              iterations, True, method, spec)


def _not_found(problem, iterations, method) -> DesignSearchResult:
    return DesignSearchResult(problem.n, problem.K_max, [], np.zeros(0), math.inf, math.inf, None,
                              problem.seed, iterations, False, method, None)


def _subset_count(P: int, lo: int, hi: int) -> int:
    return sum(math.comb(P, k) for k in range(lo, min(hi, P) + 1))


def exhaustive(problem: DesignSearchProblem) -> DesignSearchResult:
    """Score every subset of the pool with between n and K_max frequencies."""
    pool = problem.candidates()
    scorer = _Scorer(problem, pool)
    best, count = None, 0
    for size in range(problem.n, min(problem.K_max, len(pool)) + 1):
        for subset in itertools.combinations(range(len(pool)), size):
            count += 1
            score, weights, freqs = scorer(subset)
            if weights is not None and (best is None or score < best[0]):
                best = (score, weights, freqs)
    if best is None:
        return _not_found(problem, count, "exhaustive")
    return _finalize(problem, best[2], best[1], count, "exhaustive")


def _anneal_chain(problem: DesignSearchProblem, pool, seed: int, warm: tuple | None):
    rng = np.random.default_rng(seed)
    scorer = _Scorer(problem, pool)
    P = len(pool)
    K = min(problem.K_max, P)
    vecs = np.array(pool)
    if warm is None or len(warm) > K:
        # the coordinate frame is always feasible (product sqrt(n))
        warm = tuple(pool.index(tuple(int(x) for x in e)) for e in np.eye(problem.n, dtype=int)
                     if tuple(int(x) for x in e) in pool)
    rest = [k for k in range(P) if k not in warm]
    fill = rng.choice(rest, K - len(warm), replace=False) if K > len(warm) else []
    state = tuple(sorted([*warm, *map(int, fill)]))
    cur = scorer(state)
    best_state, best = state, cur
    floor = petrunin_bound(problem.n) if problem.objective == "product" else 0.0
    T, since = problem.T0, 0
    it = 0
    for it in range(1, problem.budget + 1):
        if best[0] <= floor + 1e-12 or K == P:
            break
        pos = int(rng.integers(K))
        members = set(state)
        outside = np.array([k for k in range(P) if k not in members])
        dist = np.abs(vecs[outside] - vecs[state[pos]]).sum(axis=1)
        if rng.random() < problem.explore:
            near = outside
        else:
            near = outside[np.argsort(dist, kind="stable")[: problem.neighbors]]
        new = tuple(sorted(set(state) - {state[pos]} | {int(rng.choice(near))}))
        cand = scorer(new)
        delta = cand[0] - cur[0]
        if delta <= 0 or (math.isfinite(delta) and rng.random() < math.exp(-delta / T)):
            state, cur = new, cand
        if cur[0] < best[0]:
            best_state, best, since = state, cur, 0
        else:
            since += 1
        T *= problem.alpha
        if since >= problem.stagnation:
            state, cur, T, since = best_state, best, problem.T0, 0
    return best, it


def _warm_start(pool, n) -> tuple | None:
    for iso in (True, False):
        sol = solve_weights(pool, iso)
        if sol.feasible:
            return tuple(int(k) for k in np.flatnonzero(sol.weights > 0))
    return None


def search(problem: DesignSearchProblem) -> DesignSearchResult:
    """Best candidate found for the problem; deterministic given the seed.

    Small instances (at most ``budget`` subsets) are enumerated exhaustively.
    Otherwise ``chains`` annealing chains run in parallel. The first chain
    starts from the support of the weight program over the whole pool when it
    fits in K_max, the others (and the first, otherwise) from the coordinate
    frame plus a random fill. Moves swap one frequency for one of its nearest
    pool neighbours (L1 distance), or for a uniform pick with probability
    ``explore``.
    """
    if problem.budget < 1:
        raise ValueError("budget must be >= 1")
    pool = problem.candidates()
    if _subset_count(len(pool), problem.n, problem.K_max) <= problem.budget:
        return exhaustive(problem)
    warm = _warm_start(pool, problem.n)
    seeds = np.random.SeedSequence(problem.seed).generate_state(problem.chains)
    jobs = [(int(s), warm if k == 0 else None) for k, s in enumerate(seeds)]
    with ThreadPoolExecutor(max_workers=min(worker_count(), len(jobs))) as ex:
        outs = list(ex.map(lambda job: _anneal_chain(problem, pool, *job), jobs))
    feasible = [(b, it) for b, it in outs if b[1] is not None]
    total = sum(it for _, it in outs)
    if not feasible:
        return _not_found(problem, total, "anneal")
    best = min(feasible, key=lambda o: (o[0][0], tuple(o[0][2])))[0]
    return _finalize(problem, best[2], best[1], total, "anneal")


def delta_table(n: int, N_list, budget: int = 2000, seed: int = 0, pool: str = "norm",
                norm_bound: int = 25) -> list[DesignSearchResult]:
    """Empirical Delta(n, N) for each N; a design found at N is carried to larger N."""
    rows, prev = [], None
    for N in sorted(set(int(x) for x in N_list)):
        if N < n:
            raise ValueError(f"N={N} is smaller than n={n}")
        res = search(DesignSearchProblem(n, N, pool, norm_bound, seed=seed, budget=budget))
        if prev is not None and prev.found and (not res.found or prev.product < res.product):
            res = replace(prev, K_max=N, method="carried")
        rows.append(res)
        prev = res
    return rows


def table_rows(results: list[DesignSearchResult]) -> list[dict]:
    return [{"n": r.n, "N": r.K_max, "K": r.K, "product": r.product, "delta_hat": r.delta_hat,
             "seed": r.seed} for r in results]


def _norm_vectors(N: int) -> np.ndarray:
    """Canonical integer vectors of length N with squared norm N, +-1 patterns first."""
    b = math.isqrt(N)
    out = set()

    def rec(prefix, remaining, slots):
        if slots == 0:
            if remaining == 0:
                out.add(canonical(prefix))
            return
        for x in range(-b, b + 1):
            if x * x <= remaining:
                rec(prefix + (x,), remaining - x * x, slots - 1)

    rec((), N, N)
    return np.array(sorted(out, key=lambda v: (sum(1 for x in v if x == 0), -max(abs(x) for x in v) if v else 0, v)))


@dataclass
class CliffordResult:
    spec: FrequencySpec | None
    A: np.ndarray | None
    curv: float | None
    product: float | None
    explanation: str

    def to_dict(self) -> dict:
        return {"found": self.spec is not None, "A": None if self.A is None else self.A.tolist(),
                "curv": self.curv, "product": self.product, "explanation": self.explanation,
                "spec": self.spec.to_dict() if self.spec else None}


def find_orthogonal_frame(N: int, n: int, budget: int = 200_000) -> tuple[np.ndarray | None, str]:
    """Integer N x n matrix A with A^T A = N I_n, by backtracking over columns."""
    if n == N and N % 2 == 1 and math.isqrt(N) ** 2 != N:
        return None, f"det(A)^2 = {N}^{N} is not a square: no square solution"
    cands = _norm_vectors(N)
    nodes = 0

    def rec(chosen, allowed):
        nonlocal nodes
        if len(chosen) == n:
            return chosen
        for k in allowed:
            nodes += 1
            if nodes > budget:
                return None
            v = cands[k]
            nxt = [j for j in allowed if j > k and int(cands[j] @ v) == 0]
            if len(nxt) < n - len(chosen) - 1:
                continue
            got = rec(chosen + [k], nxt)
            if got is not None:
                return got
        return None

    got = rec([], list(range(len(cands))))
    if got is None:
        why = "search exhausted" if nodes <= budget else f"node budget {budget} exhausted"
        return None, why
    return cands[got].T.copy(), "ok"


def clifford_subtorus(N: int, n: int, budget: int = 200_000, seed: int = 0) -> CliffordResult:
    """Invariant flat n-subtorus of the Clifford torus in R^{2N}.

    Looks for A with A^T A = N I_n; the modes (rows of A, radius 1/sqrt(N))
    then give an isometric spec inside the unit Clifford torus. For n == N
    without such A, the Clifford torus itself (A = I) scaled to be isometric
    (radius 1 per circle) is returned.
    """
    if N < n or n < 1:
        raise ValueError("need 1 <= n <= N")
    A, why = find_orthogonal_frame(N, n, budget)
    if A is not None:
        keep = np.any(A != 0, axis=1)
        spec = FrequencySpec.from_modes(A[keep], 1.0 / math.sqrt(N), seed=seed)
        explanation = "A^T A = N I"
    elif n == N:
        A = np.eye(N, dtype=np.int64)
        spec = FrequencySpec.from_modes(A, 1.0, seed=seed)
        explanation = f"identity frame, scaled isometric ({why})"
    else:
        return CliffordResult(None, None, None, None, why)
    rep = curv(spec)
    return CliffordResult(spec, A, rep.curv, rep.curv * enclosing_radius(spec), explanation)
