"""Normal-curvature quartic forms and the extrinsic curvature of flat tori.

For a trigonometric immersion the squared norm of the second derivative along
a geodesic with unit direction u is Psi(u) = sum_k r_k^2 <w_k, u>^4, and the
curvature of the immersion is the square root of max Psi over the unit sphere
of the induced metric.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations_with_replacement, permutations

import numpy as np
from scipy.optimize import linprog

from .immersion import FrequencySpec, enclosing_radius, induced_metric, is_isometric


@lru_cache(maxsize=None)
def multi_indices(n: int) -> tuple[tuple[int, int, int, int], ...]:
    """Sorted 4-tuples i <= j <= k <= l; n(n+1)(n+2)(n+3)/24 of them."""
    return tuple(combinations_with_replacement(range(n), 4))


@lru_cache(maxsize=None)
def _multiplicities(n: int) -> np.ndarray:
    return np.array([len(set(permutations(a))) for a in multi_indices(n)], dtype=float)


@lru_cache(maxsize=None)
def _pairs(n: int) -> tuple[tuple[int, int], ...]:
    return tuple(combinations_with_replacement(range(n), 2))


class QuarticForm:
    """Symmetric 4-linear form on R^n, stored by its entries T[i,j,k,l] at sorted multi-indices."""

    def __init__(self, n: int, coeffs):
        coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
        if coeffs.shape != (len(multi_indices(n)),):
            raise ValueError(f"expected {len(multi_indices(n))} coefficients for n={n}")
        self.n = n
        self.coeffs = coeffs
        self.coeffs.setflags(write=False)
        self._tensor = None
        self._pair = None

    @classmethod
    def from_tensor(cls, T) -> "QuarticForm":
        T = np.asarray(T, dtype=float)
        n = T.shape[0]
        sym = sum(np.transpose(T, p) for p in permutations(range(4))) / 24.0
        return cls(n, [sym[a] for a in multi_indices(n)])

    @classmethod
    def from_poly(cls, n: int, poly) -> "QuarticForm":
        """From monomial coefficients ordered like :func:`multi_indices`."""
        return cls(n, np.asarray(poly, dtype=float) / _multiplicities(n))

    @classmethod
    def from_spec(cls, spec: FrequencySpec) -> "QuarticForm":
        w = spec.w.astype(float)
        T = np.einsum("k,ka,kb,kc,kd->abcd", spec.r**2, w, w, w, w, optimize=True)
        return cls(spec.n, [T[a] for a in multi_indices(spec.n)])

    @classmethod
    def power(cls, ell) -> "QuarticForm":
        """The fourth power <ell, u>^4."""
        ell = np.asarray(ell, dtype=float)
        return cls(len(ell), [np.prod(ell[list(a)]) for a in multi_indices(len(ell))])

    @classmethod
    def norm4(cls, n: int) -> "QuarticForm":
        """|u|^4."""
        eye = np.eye(n)
        T = np.einsum("ab,cd->abcd", eye, eye)
        return cls.from_tensor(T)

    def tensor(self) -> np.ndarray:
        if self._tensor is None:
            n = self.n
            T = np.zeros((n,) * 4)
            for a, c in zip(multi_indices(n), self.coeffs):
                for p in set(permutations(a)):
                    T[p] = c
            self._tensor = T
        return self._tensor

    def poly_coeffs(self) -> np.ndarray:
        return self.coeffs * _multiplicities(self.n)

    def pair_matrix(self) -> np.ndarray:
        """S with Q(u) = q^T S q, q = (u_i u_j)_{i<=j}."""
        if self._pair is None:
            pairs = _pairs(self.n)
            T = self.tensor()
            m = np.array([1.0 if i == j else 2.0 for i, j in pairs])
            S = np.array([[T[i, j, k, l] for (k, l) in pairs] for (i, j) in pairs])
            self._pair = S * np.outer(m, m)
        return self._pair

    def __call__(self, u) -> np.ndarray | float:
        u = np.asarray(u, dtype=float)
        single = u.ndim == 1
        u2 = np.atleast_2d(u)
        pairs = _pairs(self.n)
        ii = [p[0] for p in pairs]
        jj = [p[1] for p in pairs]
        q = u2[:, ii] * u2[:, jj]
        vals = np.einsum("pa,pa->p", q @ self.pair_matrix(), q)
        return float(vals[0]) if single else vals

    def gradient(self, U: np.ndarray) -> np.ndarray:
        return 4.0 * np.einsum("abcd,pb,pc,pd->pa", self.tensor(), U, U, U, optimize=True)

    def hessian(self, U: np.ndarray) -> np.ndarray:
        return 12.0 * np.einsum("abcd,pc,pd->pab", self.tensor(), U, U, optimize=True)

    def transform(self, M) -> "QuarticForm":
        """The form v -> Q(M v)."""
        M = np.asarray(M, dtype=float)
        T = np.einsum("abcd,ai,bj,ck,dl->ijkl", self.tensor(), M, M, M, M, optimize=True)
        return QuarticForm(M.shape[1], [T[a] for a in multi_indices(M.shape[1])])

    def __add__(self, other: "QuarticForm") -> "QuarticForm":
        return QuarticForm(self.n, self.coeffs + other.coeffs)

    def __sub__(self, other: "QuarticForm") -> "QuarticForm":
        return QuarticForm(self.n, self.coeffs - other.coeffs)

    def __mul__(self, c: float) -> "QuarticForm":
        return QuarticForm(self.n, self.coeffs * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        return f"QuarticForm(n={self.n}, coeffs={self.coeffs.tolist()})"


def normal_curvature_form(spec: FrequencySpec) -> QuarticForm:
    return QuarticForm.from_spec(spec)


@dataclass(frozen=True)
class CurvatureConfig:
    starts: int = 64
    grid_resolution: int = 2000
    use_oracle: bool = True
    seed: int = 0
    max_iter: int = 2000
    zoom_candidates: int = 16
    tie_tol: float = 1e-9


DEFAULT_CONFIG = CurvatureConfig()


@dataclass
class CurvatureReport:
    curv: float
    argmax: np.ndarray
    method: str
    gap: float
    value: float
    multistart_value: float
    oracle_value: float | None = None
    residual: float = 0.0
    stationary_points: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "curv": self.curv,
            "argmax": [float(x) for x in self.argmax],
            "method": self.method,
            "gap": self.gap,
        }


def _canonical_sign(u: np.ndarray) -> np.ndarray:
    for x in u:
        if abs(x) > 1e-9:
            return u if x > 0 else -u
    return u


def _start_points(n: int, count: int, seed: int) -> np.ndarray:
    pts = [np.eye(n)]
    if 1 < n and n * n <= count // 2:
        pts.append(np.array([(np.eye(n)[i] + s * np.eye(n)[j]) / math.sqrt(2)
                             for i in range(n) for j in range(i + 1, n) for s in (1, -1)]))
    fixed = np.vstack(pts)[:count]
    rng = np.random.default_rng(seed)
    extra = rng.standard_normal((max(count - len(fixed), 0), n))
    V = np.vstack([fixed, extra])
    return V / np.linalg.norm(V, axis=1, keepdims=True)


def multistart_ascent(Q: QuarticForm, starts: int = 64, seed: int = 0, max_iter: int = 2000):
    """Maximize Q on the Euclidean unit sphere from many starts.

    Shifted power iterations (local shift keeps the shifted form convex) bring
    each start near a stationary point; Newton steps on the Lagrange system
    polish to machine precision, and starts that ended on a saddle are pushed
    along an ascent direction and rerun. Returns (values, points, residuals).
    """
    n = Q.n
    V = _start_points(n, starts, seed)
    if n == 1:
        vals = Q(V)
        return vals, V, np.zeros(len(V))
    scale = max(float(np.max(np.abs(Q.coeffs))), 1e-300)
    for _ in range(6):
        V = _shifted_power(Q, V, max_iter, scale)
        V, f = _newton_polish(Q, V, Q(V))
        # second-order check: leave saddles along an ascent direction of the tangent Hessian
        g = Q.gradient(V)
        lam = np.einsum("pa,pa->p", g, V)
        Proj = np.eye(n) - np.einsum("pa,pb->pab", V, V)
        Hr = Proj @ (Q.hessian(V) - lam[:, None, None] * np.eye(n)) @ Proj
        ev, evec = np.linalg.eigh(Hr)
        saddle = ev[:, -1] > 1e-8 * scale
        if not np.any(saddle):
            break
        V = V.copy()
        V[saddle] += 0.25 * evec[saddle, :, -1]
        V /= np.linalg.norm(V, axis=1, keepdims=True)
    f = Q(V)
    g = Q.gradient(V)
    lam = np.einsum("pa,pa->p", g, V)
    res = np.linalg.norm(g - lam[:, None] * V, axis=1)
    return f, V, res


def _shifted_power(Q: QuarticForm, V: np.ndarray, max_iter: int, scale: float) -> np.ndarray:
    boost = np.ones(len(V))
    f = Q(V)
    for _ in range(max_iter):
        g = Q.gradient(V)
        lam = np.einsum("pa,pa->p", g, V)
        res = np.linalg.norm(g - lam[:, None] * V, axis=1)
        if np.all(res < 1e-7 * scale):
            break
        lmin = np.linalg.eigvalsh(Q.hessian(V))[:, 0]
        alpha = (np.maximum(0.0, -lmin / 4.0) + 1e-3 * scale) * boost
        Vn = g + 4.0 * alpha[:, None] * V
        Vn /= np.linalg.norm(Vn, axis=1, keepdims=True)
        fn = Q(Vn)
        ok = fn >= f - 1e-14 * scale
        V = np.where(ok[:, None], Vn, V)
        f = np.where(ok, fn, f)
        boost = np.where(ok, np.maximum(boost / 2.0, 1.0), boost * 2.0)
    return V


def _newton_polish(Q: QuarticForm, V: np.ndarray, f: np.ndarray, steps: int = 8):
    n = Q.n
    scale = max(float(np.max(np.abs(Q.coeffs))), 1e-300)
    for _ in range(steps):
        g = Q.gradient(V)
        lam = np.einsum("pa,pa->p", g, V)
        H = Q.hessian(V)
        J = np.zeros((len(V), n + 1, n + 1))
        J[:, :n, :n] = H - lam[:, None, None] * np.eye(n)
        J[:, :n, n] = -V
        J[:, n, :n] = -V
        F = np.concatenate([g - lam[:, None] * V, np.zeros((len(V), 1))], axis=1)
        step = -np.einsum("pab,pb->pa", np.linalg.pinv(J), F)
        Vn = V + step[:, :n]
        Vn /= np.linalg.norm(Vn, axis=1, keepdims=True)
        fn = Q(Vn)
        ok = fn >= f - 1e-13 * scale
        V = np.where(ok[:, None], Vn, V)
        f = np.where(ok, fn, f)
    return V, f


def _angles_to_points(n: int, ang: np.ndarray) -> np.ndarray:
    if n == 2:
        return np.stack([np.cos(ang[..., 0]), np.sin(ang[..., 0])], axis=-1)
    th, ph = ang[..., 0], ang[..., 1]
    return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)


@lru_cache(maxsize=2)
def _grid_cache(n: int, resolution: int):
    """Angular grid and its quadratic monomials (float32: used only to rank cells)."""
    if n == 2:
        axes = [np.pi * np.arange(resolution) / resolution]
    else:
        axes = [np.linspace(0.0, np.pi, resolution), np.pi * np.arange(resolution) / resolution]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n - 1)
    pairs = _pairs(n)
    quad = np.empty((len(mesh), len(pairs)), dtype=np.float32)
    for s in range(0, len(mesh), 500_000):
        pts = _angles_to_points(n, mesh[s:s + 500_000])
        quad[s:s + 500_000] = np.stack([pts[:, i] * pts[:, j] for i, j in pairs], axis=1)
    return mesh, quad


def grid_oracle(Q: QuarticForm, resolution: int = 2000, candidates: int = 16, chunk: int = 400_000):
    """Deterministic derivative-free maximum of Q on the unit sphere, n <= 3.

    A uniform angular grid (``resolution`` points per angle, antipodal half
    only since Q is even) locates the best cells; each of the top
    ``candidates`` separated cells is refined by nested zooming grids.
    Returns (value, point).
    """
    n = Q.n
    if n == 1:
        return Q(np.array([1.0])), np.array([1.0])
    if n > 3:
        raise ValueError("grid oracle only for n <= 3")
    mesh, quad = _grid_cache(n, resolution)
    S = Q.pair_matrix().astype(np.float32)
    vals = np.empty(len(mesh), dtype=np.float32)
    for s in range(0, len(mesh), chunk):
        qs = quad[s:s + chunk]
        vals[s:s + chunk] = np.einsum("pa,pa->p", qs @ S, qs)
    step = np.pi / resolution
    top = min(len(vals), max(candidates * 200, 1000))
    part = np.argpartition(-vals, top - 1)[:top]
    order = part[np.argsort(-vals[part], kind="stable")]
    chosen = []
    for idx in order:
        a = mesh[idx]
        if all(np.max(np.abs(a - b)) > 3 * step for b in chosen):
            chosen.append(a)
            if len(chosen) >= candidates:
                break
    best_val, best_pt = -np.inf, None
    offsets = np.linspace(-1.0, 1.0, 11)
    local = np.stack(np.meshgrid(*([offsets] * (n - 1)), indexing="ij"), axis=-1).reshape(-1, n - 1)
    for a in chosen:
        h = 2.0 * step
        cur = a.copy()
        cur_val = Q(_angles_to_points(n, cur))
        while h > 1e-11:
            trial = cur + h * local
            tv = Q(_angles_to_points(n, trial))
            k = int(np.argmax(tv))
            if tv[k] > cur_val:
                cur, cur_val = trial[k], tv[k]
            h /= 4.0
        if cur_val > best_val:
            best_val, best_pt = cur_val, _angles_to_points(n, cur)
    return float(best_val), best_pt


def max_on_sphere(Q: QuarticForm, G=None, config: CurvatureConfig = DEFAULT_CONFIG) -> CurvatureReport:
    """Maximize Q(u,u,u,u) over {u : u^T G u = 1}."""
    n = Q.n
    G = np.eye(n) if G is None else np.asarray(G, dtype=float)
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise ValueError("metric is not positive definite") from exc
    # u = L^{-T} v maps the Euclidean unit sphere onto the G-unit sphere
    M = np.linalg.inv(L).T
    Qw = Q.transform(M)
    vals, V, res = multistart_ascent(Qw, config.starts, config.seed, config.max_iter)
    ms_best = float(np.max(vals))
    U = V @ M.T
    near = np.flatnonzero(vals >= ms_best - config.tie_tol)
    cands = sorted(
        (tuple(np.round(_canonical_sign(U[k]), 9)), k) for k in near
    )
    k_best = cands[-1][1]
    u_star = _canonical_sign(U[k_best])
    residual = float(res[k_best])
    oracle_val = None
    value, method, gap = ms_best, "multistart-ascent", residual
    if config.use_oracle and n <= 3:
        oracle_val, v_or = grid_oracle(Qw, config.grid_resolution, config.zoom_candidates)
        gap = abs(ms_best - oracle_val)
        if oracle_val > ms_best:
            value, method = oracle_val, "grid-oracle"
            u_star = _canonical_sign(M @ v_or)
    stationary = [(float(vals[k]), U[k]) for k in range(len(vals)) if res[k] < 1e-9 * max(1.0, abs(vals[k]))]
    return CurvatureReport(
        curv=math.sqrt(max(value, 0.0)),
        argmax=u_star,
        method=method,
        gap=float(gap),
        value=float(value),
        multistart_value=ms_best,
        oracle_value=oracle_val,
        residual=residual,
        stationary_points=stationary,
    )


def curv(spec: FrequencySpec, config: CurvatureConfig = DEFAULT_CONFIG) -> CurvatureReport:
    """Extrinsic curvature of the immersion with respect to its own induced flat metric."""
    return max_on_sphere(normal_curvature_form(spec), induced_metric(spec), config)


def petrunin_bound(n: int) -> float:
    return math.sqrt(3.0 * n / (n + 2.0))


@dataclass
class PetruninCheck:
    product: float
    bound: float
    passed: bool
    report: CurvatureReport = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {"product": self.product, "bound": self.bound, "pass": self.passed}


def petrunin_product_check(spec: FrequencySpec, config: CurvatureConfig = DEFAULT_CONFIG,
                           report: CurvatureReport | None = None) -> PetruninCheck:
    """Check curv * R >= sqrt(3n/(n+2)) for an isometric spec (scale-invariant form)."""
    ok, defect = is_isometric(spec, 1e-8)
    if not ok:
        raise ValueError(f"spec is not isometric (metric defect {defect:.3g})")
    report = report or curv(spec, config)
    product = report.curv * enclosing_radius(spec)
    bound = petrunin_bound(spec.n)
    return PetruninCheck(product, bound, product >= bound - 1e-6, report)


def isotropy_defect(Q: QuarticForm, config: CurvatureConfig = DEFAULT_CONFIG) -> float:
    """min over c of max |Q(u) - c| on the unit sphere, i.e. (max - min) / 2."""
    hi = max_on_sphere(Q, None, config).value
    lo = -max_on_sphere(-Q, None, config).value
    return max(0.0, (hi - lo) / 2.0)


def sphere_sample(n: int, samples: int, seed: int = 0) -> np.ndarray:
    """Deterministic directions (antipodal classes): axes, diagonals, then a seeded draw."""
    fixed = [np.eye(n)]
    if n > 1:
        fixed.append(_start_points(n, n + n * (n - 1), 0)[n:])
    base = np.vstack(fixed)
    if n == 2:
        th = np.pi * np.arange(samples) / samples
        pts = np.stack([np.cos(th), np.sin(th)], axis=1)
        return np.vstack([base, pts])
    rng = np.random.default_rng(seed)
    extra = rng.standard_normal((max(samples - len(base), 0), n))
    extra /= np.linalg.norm(extra, axis=1, keepdims=True)
    return np.vstack([base, extra])


class WaringLPError(RuntimeError):
    """The LP solver failed for numerical reasons (not infeasibility)."""


@dataclass
class WaringResult:
    inside: bool
    certificate: dict
    residual: float


def waring_cone_membership(Q: QuarticForm, samples: int = 400, tol: float = 1e-9, seed: int = 0) -> WaringResult:
    """Approximate test that Q is a nonnegative combination of fourth powers.

    Solves min ||sum_s lam_s ell_s^4 - Q||_1 over lam >= 0 for a fixed sample
    of directions ell_s, in monomial-coefficient space. One-sided: ``inside``
    means Q is within ``tol`` (relative) of the sampled cone. On failure the
    certificate is either a sample direction where Q is negative or a dual
    functional nonnegative on every sampled fourth power and negative on Q.
    """
    n = Q.n
    if n > 4:
        raise ValueError("Waring test is for n <= 4")
    if samples < 100:
        raise ValueError("need at least 100 samples")
    ells = sphere_sample(n, samples, seed)
    qv = Q(ells)
    k = int(np.argmin(qv))
    if qv[k] < -tol * max(1.0, float(np.max(np.abs(Q.coeffs)))):
        return WaringResult(False, {"kind": "negative-direction", "direction": ells[k].tolist(),
                                    "value": float(qv[k])}, float(-qv[k]))
    A = np.array([QuarticForm.power(e).poly_coeffs() for e in ells]).T
    q = Q.poly_coeffs()
    norm = max(float(np.max(np.abs(q))), 1e-300)
    A, q = A / norm, q / norm
    m, S = A.shape
    # variables: lam (S), s_plus (m), s_minus (m)
    c = np.concatenate([np.zeros(S), np.ones(2 * m)])
    A_eq = np.hstack([A, np.eye(m), -np.eye(m)])
    res = linprog(c, A_eq=A_eq, b_eq=q, bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise WaringLPError(f"LP failed: {res.message}")
    slack = float(res.fun)
    if slack <= tol:
        lam = res.x[:S]
        support = np.flatnonzero(lam > 1e-12)
        return WaringResult(True, {"kind": "combination", "directions": ells[support].tolist(),
                                   "weights": (lam[support] * norm).tolist()}, slack)
    y = np.asarray(res.eqlin.marginals)
    # dual of the L1 problem: A^T y <= 0, |y| <= 1, q.y = slack > 0; negate to get a separator
    return WaringResult(False, {"kind": "separating-functional", "functional": (-y).tolist(),
                                "pairing_with_Q": float(-q @ y)}, slack)
