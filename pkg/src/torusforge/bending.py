"""Corrugation of circle factors and the flat bending cascade.

One step replaces a circle factor T_i of length l by a unit-speed closed
curve of length (1 + eps) l in the flat 2-torus T_i x T_new, with turning
angle alpha(s) = a cos(2 pi q s / L'). The amplitude a solves
J0(a) = 1 / (1 + eps), so the curve winds exactly once around T_i and not at
all around T_new. Precomposing the bent factor with the linear coordinate of
the flat torus keeps the induced metric constant.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import j0, jv

from .curvature import CurvatureConfig, QuarticForm, max_on_sphere
from .immersion import FrequencySpec, GeneralImmersion, SpecError, spec_from_dict
from .jets import Jet2

SERIES_TERMS = 40
# J0 decreases on (0, pi); J0(pi) < 0 < 1 / (1 + eps) for every eps > 0
AMPLITUDE_BRACKET = (0.0, math.pi)


class CorrugationError(ValueError):
    pass


def solve_amplitude(eps: float, tol: float = 1e-15) -> float:
    """Root a in (0, pi) of J0(a) = 1/(1+eps), by bisection."""
    if not eps > 0:
        raise CorrugationError("eps must be positive; feasible range is (0, inf)")
    target = 1.0 / (1.0 + eps)
    lo, hi = AMPLITUDE_BRACKET
    if not j0(hi) < target < j0(lo):
        raise CorrugationError(f"no amplitude in (0, pi) for eps={eps}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if j0(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class CorrugationStep:
    eps: float
    q: int
    index: int
    length: float | None = None  # length of the new circle; defaults to the bent factor's length

    def __post_init__(self):
        if not self.eps > 0:
            raise CorrugationError("eps must be positive")
        if int(self.q) != self.q or self.q < 2:
            raise CorrugationError("q must be an integer >= 2")
        if self.length is not None and not self.length > 0:
            raise CorrugationError("new circle length must be positive")


class CorrugationCurve:
    """Unit-speed closed curve gamma: [0, (1+eps) l) -> R/lZ x R/l'Z with winding (1, 0).

    Position is the termwise integral of the Jacobi-Anger series of
    (cos alpha, sin alpha); derivatives come straight from alpha.
    """

    def __init__(self, eps: float, q: int, l_i: float, l_next: float):
        if not (l_i > 0 and l_next > 0):
            raise CorrugationError("circle lengths must be positive")
        if int(q) != q or q < 2:
            raise CorrugationError("q must be an integer >= 2")
        self.eps, self.q, self.l_i, self.l_next = float(eps), int(q), float(l_i), float(l_next)
        self.a = solve_amplitude(eps)
        self.length = (1.0 + self.eps) * self.l_i
        self.kappa = 2.0 * math.pi * self.q / self.length
        k = np.arange(1, SERIES_TERMS + 1)
        bes = jv(k, self.a)
        sign = (-1.0) ** (k // 2)
        # cos(a cos th) = J0 + 2 sum_m (-1)^m J_2m cos(2m th); sin(a cos th) = 2 sum_m (-1)^m J_{2m+1} cos((2m+1) th)
        self._k = k
        self._cx = np.where(k % 2 == 0, 2.0 * sign * bes, 0.0)
        self._cy = np.where(k % 2 == 1, 2.0 * sign * bes, 0.0)
        self._j0 = float(j0(self.a))

    def alpha(self, s):
        return self.a * np.cos(self.kappa * np.asarray(s, dtype=float))

    def position(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        ks = np.multiply.outer(s, self._k * self.kappa)
        sin_ks = np.sin(ks) / (self._k * self.kappa)
        x = self._j0 * s + sin_ks @ self._cx
        y = sin_ks @ self._cy
        return np.stack([x, y], axis=-1)

    def jet(self, s):
        """(position, velocity, acceleration), each shaped (..., 2)."""
        s = np.asarray(s, dtype=float)
        al = self.alpha(s)
        dal = -self.a * self.kappa * np.sin(self.kappa * s)
        vel = np.stack([np.cos(al), np.sin(al)], axis=-1)
        acc = dal[..., None] * np.stack([-np.sin(al), np.cos(al)], axis=-1)
        return self.position(s), vel, acc

    def closure_defect(self) -> np.ndarray:
        """Lifted endpoint minus start minus (l_i, 0)."""
        return self.position(self.length) - self.position(0.0) - np.array([self.l_i, 0.0])


def _circle(z: Jet2, rho: float) -> list[Jet2]:
    arg = z * (1.0 / rho)
    return [arg.cos() * rho, arg.sin() * rho]


def _bend(s: Jet2, curves: list[CorrugationCurve]) -> tuple[Jet2, list[Jet2]]:
    """Innermost-first: returns the coordinate on the original circle and the new-circle coordinates."""
    news = []
    for curve in reversed(curves):
        pos, vel, acc = curve.jet(s.val)
        news.append(s.compose(pos[:, 1], vel[:, 1], acc[:, 1]))
        s = s.compose(pos[:, 0], vel[:, 0], acc[:, 0])
    return s, news[::-1]


@dataclass(frozen=True, eq=False)
class CascadeImmersion(GeneralImmersion):
    start: FrequencySpec = None
    steps: tuple = ()
    curves: tuple = ()
    metric: np.ndarray = field(default=None)
    stretch: np.ndarray = field(default=None)


def cascade(start: FrequencySpec, steps) -> CascadeImmersion:
    """Bend circle factors of ``start`` in sequence, each step adding a new ambient plane.

    Steps may only target factors of the start spec (index 0..K-1); the new
    circles are not linear in t and cannot be bent further. Repeated steps on
    one factor bend its current curve again. The induced metric is the
    constant sum_k s_k^2 r_k^2 w_k w_k^T with s_k the product of (1 + eps)
    over the steps on factor k.
    """
    steps = tuple(s if isinstance(s, CorrugationStep) else CorrugationStep(**s) for s in steps)
    K = start.K
    per_factor: list[list[tuple[int, CorrugationCurve]]] = [[] for _ in range(K)]
    curves = []
    current_len = [2.0 * math.pi * float(r) for r in start.r]
    for g, step in enumerate(steps):
        if not 0 <= step.index < K:
            raise CorrugationError(
                f"step {g}: index {step.index} is not a bendable factor (valid 0..{K - 1})")
        base = 2.0 * math.pi * float(start.r[step.index])
        curve = CorrugationCurve(step.eps, step.q, current_len[step.index], step.length or base)
        current_len[step.index] = curve.length
        per_factor[step.index].append((g, curve))
        curves.append(curve)
    stretch = np.array([current_len[k] / (2.0 * math.pi * float(start.r[k])) for k in range(K)])
    w = start.w.astype(float)
    metric = np.einsum("k,ki,kj->ij", (stretch * start.r) ** 2, w, w)
    new_radius = [c.l_next / (2.0 * math.pi) for c in curves]

    def build(coords):
        out = []
        extra: list[list[Jet2] | None] = [None] * len(curves)
        for k in range(K):
            rk = float(start.r[k])
            z = coords[0] * 0.0 + rk * float(start.phi[k])
            for i, c in enumerate(start.w[k]):
                if c:
                    z = z + coords[i] * (rk * float(c))
            chain = per_factor[k]
            if chain:
                base, news = _bend(z * float(stretch[k]), [c for _, c in chain])
                for (g, _), y in zip(chain, news):
                    extra[g] = _circle(y, new_radius[g])
            else:
                base = z
            out.extend(_circle(base, rk))
        for e in extra:
            out.extend(e)
        return out

    M = 2 * (K + len(curves))
    return CascadeImmersion(start.n, M, build, None, start, steps, tuple(curves), metric, stretch)


def certify_flat(im, samples: int = 10_000, tol: float = 1e-6, seed: int = 0, chunk: int = 2000):
    """Max entrywise spread of D1^T D1 over seeded sample points; flat iff below ``tol``."""
    if samples < 2:
        raise ValueError("samples must be >= 2")
    if isinstance(im, FrequencySpec):
        im = im.as_immersion()
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, 1.0, (samples, im.n)) @ np.asarray(im.lattice).T
    lo = np.full((im.n, im.n), np.inf)
    hi = np.full((im.n, im.n), -np.inf)
    for s in range(0, samples, chunk):
        _, d1, _ = im.jet(pts[s:s + chunk])
        G = np.einsum("pmi,pmj->pij", d1, d1)
        lo = np.minimum(lo, G.min(axis=0))
        hi = np.maximum(hi, G.max(axis=0))
    dev = float(np.max(hi - lo))
    return dev < tol, dev


def sampled_curvature(im, G=None, samples: int = 200, seed: int = 0,
                      config: CurvatureConfig = CurvatureConfig(use_oracle=False, starts=16)) -> float:
    """Max over sample points of sqrt(max_u |D2(t)[u, u]|^2) on the G-unit sphere.

    For an immersion with constant induced metric G this samples the
    supremum of the curvatures of image geodesics.
    """
    if isinstance(im, FrequencySpec):
        im = im.as_immersion()
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, 1.0, (samples, im.n)) @ np.asarray(im.lattice).T
    _, d1, d2 = im.jet(pts)
    if G is None:
        G = np.einsum("mi,mj->ij", d1[0], d1[0])
    best = 0.0
    for D in d2:
        T = np.einsum("mab,mcd->abcd", D, D)
        best = max(best, max_on_sphere(QuarticForm.from_tensor(T), G, config).value)
    return math.sqrt(best)


def corrugation_curvature(curve: CorrugationCurve, samples: int = 4000) -> float:
    """Max ambient curvature of the bent circle mapped into R^4 by two round circles."""
    s = np.linspace(0.0, curve.length, samples, endpoint=False)
    pos, vel, acc = curve.jet(s)
    r1, r2 = curve.l_i / (2 * math.pi), curve.l_next / (2 * math.pi)
    # d^2/ds^2 of rho (cos(x/rho), sin(x/rho)) = x'' e_tan - x'^2 / rho e_rad, e_tan ⟂ e_rad
    k2 = (acc[:, 0] ** 2 + (vel[:, 0] ** 2 / r1) ** 2 + acc[:, 1] ** 2 + (vel[:, 1] ** 2 / r2) ** 2)
    return float(np.sqrt(k2.max()))


def load_plan(path_or_text) -> tuple[FrequencySpec, list[CorrugationStep]]:
    """Read a cascade plan {"start": spec-or-{"clifford": {"N", "n"}}, "steps": [...]}."""
    text = path_or_text
    if not str(path_or_text).lstrip().startswith("{"):
        with open(path_or_text) as fh:
            text = fh.read()
    try:
        plan = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"malformed JSON: {exc.msg}", line=exc.lineno) from exc
    if "start" not in plan:
        raise SpecError("missing key", "start")
    st = plan["start"]
    if isinstance(st, dict) and "clifford" in st:
        from .design import clifford_subtorus

        params = st["clifford"]
        res = clifford_subtorus(int(params["N"]), int(params["n"]))
        if res.spec is None:
            raise SpecError(f"no Clifford subtorus: {res.explanation}", "start.clifford")
        start = res.spec
    else:
        start = spec_from_dict(st)
    steps = []
    for g, s in enumerate(plan.get("steps", [])):
        try:
            steps.append(CorrugationStep(float(s["eps"]), int(s["q"]), int(s["index"]), s.get("length")))
        except KeyError as exc:
            raise SpecError("missing key", f"steps[{g}].{exc.args[0]}") from exc
    return start, steps
