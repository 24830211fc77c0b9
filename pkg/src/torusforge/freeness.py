"""Freeness of immersions via the rank of the second osculating system.

An immersion of an n-manifold is free at t when the first derivatives
d_i f and second derivatives d_ij f span n + n(n+1)/2 dimensions. All
checks here sample points (and, for m-freeness, integer flat subtori), so a
pass is a sampled certificate rather than a proof over the whole torus.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .immersion import TWO_PI, FrequencySpec, GeneralImmersion, jet2


def required_rank(n: int) -> int:
    return n + n * (n + 1) // 2


def osculating_matrix(im, t) -> np.ndarray:
    """Rows d_i f then d_ij f (i <= j), shape (n + n(n+1)/2, M); batched over t."""
    _, d1, d2 = jet2(im, t)
    single = d1.ndim == 2
    if single:
        d1, d2 = d1[None], d2[None]
    n = d1.shape[-1]
    iu, ju = np.triu_indices(n)
    rows = np.concatenate([np.swapaxes(d1, 1, 2), d2[:, :, iu, ju].transpose(0, 2, 1)], axis=1)
    return rows[0] if single else rows


def _ranks(mats: np.ndarray, tol: float):
    sv = np.linalg.svd(mats, compute_uv=False)
    top = sv[:, :1]
    keep = sv > tol * top
    ranks = keep.sum(axis=1)
    smallest_kept = np.where(keep, sv, np.inf).min(axis=1)
    return ranks, smallest_kept / (tol * top[:, 0])


def osc2_rank(im, t, tol: float = 1e-8) -> int:
    if tol <= 0:
        raise ValueError("tol must be positive")
    ranks, _ = _ranks(np.atleast_3d(osculating_matrix(im, t)[None]), tol)
    return int(ranks[0])


@dataclass
class OsculatingReport:
    points: np.ndarray = field(repr=False)
    ranks: list[int]
    min_rank: int
    required: int
    margin: float

    @property
    def free(self) -> bool:
        return self.min_rank == self.required

    def to_dict(self) -> dict:
        return {"free": self.free, "min_rank": self.min_rank, "required": self.required,
                "margin": self.margin, "trials": len(self.ranks)}


def _sample_points(im, trials: int, seed: int) -> np.ndarray:
    n = im.n
    lattice = im.lattice if isinstance(im, GeneralImmersion) and im.lattice is not None else TWO_PI * np.eye(n)
    u = np.random.default_rng(seed).uniform(0.0, 1.0, (trials, n))
    return u @ np.asarray(lattice).T


def is_free(im, trials: int = 50, tol: float = 1e-8, seed: int = 0) -> OsculatingReport:
    """Osculating rank at ``trials`` seeded random points; free iff all are maximal."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    pts = _sample_points(im, trials, seed)
    ranks, margins = _ranks(osculating_matrix(im, pts), tol)
    return OsculatingReport(pts, [int(k) for k in ranks], int(ranks.min()), required_rank(im.n), float(margins.min()))


def restrict(spec: FrequencySpec, B, offset=None) -> FrequencySpec:
    """The flat subtorus s -> f(offset + B s), B an integer n x m matrix of rank m.

    Modes whose restricted frequency vanishes are constant along the subtorus
    and are dropped; they do not affect derivatives.
    """
    B = np.asarray(B, dtype=np.int64)
    offset = np.zeros(spec.n) if offset is None else np.asarray(offset, dtype=float)
    w = spec.w @ B
    phi = spec.phi + spec.w.astype(float) @ offset
    keep = np.any(w != 0, axis=1)
    return FrequencySpec(B.shape[1], w[keep], spec.r[keep], phi[keep])


@dataclass
class MFreeReport:
    m: int
    passed: bool
    directions: list = field(repr=False)
    reports: list = field(repr=False)

    def to_dict(self) -> dict:
        return {"m": self.m, "pass": self.passed, "direction_trials": len(self.directions),
                "min_rank": min(r.min_rank for r in self.reports), "required": required_rank(self.m)}


def is_m_free(spec: FrequencySpec, m: int, direction_trials: int = 20, point_trials: int = 20,
              tol: float = 1e-8, seed: int = 0) -> MFreeReport:
    """Sampled m-freeness over integer flat subtori with entries in [-3, 3].

    m == n uses only the identity direction matrix (restriction to the whole torus).
    """
    n = spec.n
    if not 1 <= m <= n:
        raise ValueError("need 1 <= m <= n")
    rng = np.random.default_rng(seed)
    directions, reports = [], []
    if m == n:
        directions.append(np.eye(n, dtype=np.int64))
        reports.append(is_free(spec, point_trials, tol, seed))
        return MFreeReport(m, reports[0].free, directions, reports)
    while len(directions) < direction_trials:
        B = rng.integers(-3, 4, size=(n, m))
        if np.linalg.matrix_rank(B.astype(float)) < m:
            continue
        offset = rng.uniform(0.0, TWO_PI, n)
        sub = restrict(spec, B, offset)
        directions.append(B)
        reports.append(is_free(sub, point_trials, tol, int(rng.integers(2**31))))
    return MFreeReport(m, all(r.free for r in reports), directions, reports)


def dimension_thresholds(m: int, n: int) -> dict:
    """Closed-form dimension bounds for m-free and free isometric immersions of flat tori."""
    if not 1 <= m <= n:
        raise ValueError("need 1 <= m <= n")
    generic_m_free = m * (m + 1) // 2 + m * (n - m) + 2 * n
    return {
        "m": m,
        "n": n,
        "generic_m_free_N": generic_m_free,
        "bending_2N_bound": generic_m_free,
        "bending_min_N": -(-generic_m_free // 2),
        "free_torus_N": n * (n + 1) // 2 + n + 2,
        "ii_torus_N": n * (n + 1) // 2 + n + 1,
        "generic_ii_N": n * (n + 1) // 2 + 2 * n,
        "whitney_route_N": 2 * m * (2 * m - 1) // 2 + 2 * m,
    }
