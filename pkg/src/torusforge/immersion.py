"""Trigonometric flat-torus immersions and general composed immersions.

A :class:`FrequencySpec` is the map

    f(t) = sum_k r_k (cos(<w_k, t> + phi_k), sin(<w_k, t> + phi_k))

of R^n / 2 pi Z^n into R^{2K}, one coordinate plane per mode. Its induced
metric is the constant matrix sum_k r_k^2 w_k w_k^T.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .jets import Jet2, stack

TWO_PI = 2.0 * math.pi


class SpecError(ValueError):
    """Invalid or malformed immersion data. ``field`` names the offending entry."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FrequencySpec:
    n: int
    w: np.ndarray  # (K, n) integer frequencies
    r: np.ndarray  # (K,) radii
    phi: np.ndarray  # (K,) phases in [0, 2 pi)

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise SpecError("intrinsic dimension must be positive", "n")
        w = np.asarray(self.w)
        if w.ndim == 1 and n == 1:
            w = w[:, None]
        if w.ndim != 2 or w.shape[1] != n or w.shape[0] == 0:
            raise SpecError(f"frequencies must have shape (K, {n})", "w")
        if not np.all(np.asarray(w) == np.round(w)):
            raise SpecError("frequencies must be integers", "w")
        w = np.round(w).astype(np.int64)
        r = np.asarray(self.r, dtype=float).reshape(-1)
        phi = np.asarray(self.phi, dtype=float).reshape(-1)
        K = w.shape[0]
        if r.shape != (K,) or phi.shape != (K,):
            raise SpecError("radii and phases need one entry per mode", "r" if r.shape != (K,) else "phi")
        if np.any(~np.isfinite(r)) or np.any(r <= 0):
            raise SpecError("radii must be positive", "r")
        if np.any(~np.isfinite(phi)):
            raise SpecError("phases must be finite", "phi")
        if np.any(np.all(w == 0, axis=1)):
            raise SpecError("zero frequency vector", "w")
        if K < n or np.linalg.matrix_rank(w.astype(float)) < n:
            raise SpecError("frequency matrix has rank < n; not an immersion", "w")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "w", _frozen(w))
        object.__setattr__(self, "r", _frozen(r))
        object.__setattr__(self, "phi", _frozen(np.mod(phi, TWO_PI)))

    @classmethod
    def from_modes(
        cls,
        w: Sequence[Sequence[int]],
        r: Sequence[float] | float = 1.0,
        phi: Sequence[float] | None = None,
        seed: int | None = None,
    ) -> "FrequencySpec":
        """Build a spec; phases default to zero, or a seeded uniform draw if ``seed`` is given."""
        w = np.atleast_2d(np.asarray(w))
        K, n = w.shape
        r = np.broadcast_to(np.asarray(r, dtype=float), (K,))
        if phi is None:
            phi = np.zeros(K) if seed is None else np.random.default_rng(seed).uniform(0.0, TWO_PI, K)
        return cls(n, w, r, phi)

    @property
    def K(self) -> int:
        return self.w.shape[0]

    @property
    def ambient_dim(self) -> int:
        return 2 * self.K

    def __eq__(self, other):
        if not isinstance(other, FrequencySpec):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.w, other.w)
            and np.array_equal(self.r, other.r)
            and np.array_equal(self.phi, other.phi)
        )

    def __hash__(self):
        return hash((self.n, self.w.tobytes(), self.r.tobytes(), self.phi.tobytes()))

    def _angles(self, t) -> tuple[np.ndarray, bool]:
        t = np.asarray(t, dtype=float)
        single = t.ndim == 1
        t2 = np.atleast_2d(t)
        if t2.shape[-1] != self.n or t2.ndim != 2:
            raise SpecError(f"point has dimension {t.shape[-1] if t.ndim else 0}, expected {self.n}", "t")
        return t2 @ self.w.T.astype(float) + self.phi, single

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "modes": [
                {"w": [int(x) for x in wk], "r": float(rk), "phi": float(pk)}
                for wk, rk, pk in zip(self.w, self.r, self.phi)
            ],
        }

    def as_immersion(self) -> "GeneralImmersion":
        return GeneralImmersion(self.n, self.ambient_dim, lambda coords: _frequency_components(self, coords))


def spec_from_dict(data: dict) -> FrequencySpec:
    if not isinstance(data, dict):
        raise SpecError("spec must be a JSON object")
    if "n" not in data:
        raise SpecError("missing key", "n")
    if "modes" not in data or not isinstance(data["modes"], list):
        raise SpecError("missing or non-list key", "modes")
    n = data["n"]
    if not isinstance(n, int) or isinstance(n, bool):
        raise SpecError("must be an integer", "n")
    w, r, phi = [], [], []
    for k, mode in enumerate(data["modes"]):
        for key in ("w", "r"):
            if key not in mode:
                raise SpecError("missing key", f"modes[{k}].{key}")
        wk = mode["w"]
        if not isinstance(wk, list) or len(wk) != n or not all(isinstance(x, int) and not isinstance(x, bool) for x in wk):
            raise SpecError(f"must be a list of {n} integers", f"modes[{k}].w")
        if not isinstance(mode["r"], (int, float)) or mode["r"] <= 0:
            raise SpecError("must be a positive number", f"modes[{k}].r")
        p = mode.get("phi", 0.0)
        if not isinstance(p, (int, float)):
            raise SpecError("must be a number", f"modes[{k}].phi")
        w.append(wk)
        r.append(float(mode["r"]))
        phi.append(float(p))
    if not w:
        raise SpecError("at least one mode required", "modes")
    return FrequencySpec(n, np.array(w, dtype=np.int64), np.array(r), np.array(phi))


def spec_to_json(spec: FrequencySpec, indent: int | None = 2) -> str:
    return json.dumps(spec.to_dict(), indent=indent)


def spec_from_json(text: str) -> FrequencySpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"malformed JSON: {exc.msg}", line=exc.lineno) from exc
    return spec_from_dict(data)


def load_spec(path) -> FrequencySpec:
    with open(path) as fh:
        return spec_from_json(fh.read())


def save_spec(spec: FrequencySpec, path) -> None:
    with open(path, "w") as fh:
        fh.write(spec_to_json(spec) + "\n")


@dataclass(frozen=True, eq=False)
class GeneralImmersion:
    """A map T^n -> R^M whose ambient coordinates are built from jets of ``t``.

    ``build`` receives the n coordinate jets and returns M ambient jets. The
    torus is R^n modulo the columns of ``lattice`` (default 2 pi Z^n).
    """

    n: int
    M: int
    build: Callable[[list[Jet2]], list[Jet2]]
    lattice: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.lattice is None:
            object.__setattr__(self, "lattice", _frozen(TWO_PI * np.eye(self.n)))

    def jet(self, t):
        t = np.asarray(t, dtype=float)
        single = t.ndim == 1
        t2 = np.atleast_2d(t)
        if t2.shape[1] != self.n:
            raise SpecError(f"point has dimension {t2.shape[1]}, expected {self.n}", "t")
        comps = self.build(Jet2.variables(t2))
        if len(comps) != self.M:
            raise RuntimeError(f"immersion built {len(comps)} components, declared {self.M}")
        val, d1, d2 = stack(comps)
        if single:
            return val[0], d1[0], d2[0]
        return val, d1, d2

    def __call__(self, t):
        return self.jet(t)[0]


def _frequency_components(spec: FrequencySpec, coords: list[Jet2]) -> list[Jet2]:
    out = []
    for wk, rk, pk in zip(spec.w, spec.r, spec.phi):
        theta = pk
        for i, c in enumerate(wk):
            if c:
                theta = coords[i] * float(c) + theta
        out.append(theta.cos() * rk)
        out.append(theta.sin() * rk)
    return out


def precompose_linear(im: GeneralImmersion | FrequencySpec, A, b=None) -> GeneralImmersion:
    """The immersion t -> im(A t + b), for a general flat lattice.

    The period lattice becomes A^{-1} times the inner lattice.
    """
    if isinstance(im, FrequencySpec):
        im = im.as_immersion()
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != im.n:
        raise SpecError("linear map has the wrong target dimension", "A")
    b = np.zeros(im.n) if b is None else np.asarray(b, dtype=float)
    m = A.shape[1]

    def build(coords):
        inner = []
        for i in range(im.n):
            acc = Jet2(coords[0].val * 0 + b[i], coords[0].d1 * 0, coords[0].d2 * 0)
            for j in range(m):
                if A[i, j]:
                    acc = acc + coords[j] * A[i, j]
            inner.append(acc)
        return im.build(inner)

    lattice = np.linalg.solve(A, im.lattice) if A.shape[0] == A.shape[1] else None
    return GeneralImmersion(m, im.M, build, lattice)


def evaluate(spec: FrequencySpec, t) -> np.ndarray:
    """Point(s) of the immersion; ``t`` is (n,) or (P, n)."""
    ang, single = spec._angles(t)
    out = np.empty(ang.shape[:1] + (2 * spec.K,))
    out[:, 0::2] = spec.r * np.cos(ang)
    out[:, 1::2] = spec.r * np.sin(ang)
    return out[0] if single else out


def jet2(im: FrequencySpec | GeneralImmersion, t):
    """Value, first derivatives (M, n) and second derivatives (M, n, n) at ``t``.

    Batched over a leading axis when ``t`` is (P, n).
    """
    if isinstance(im, GeneralImmersion):
        return im.jet(t)
    ang, single = im._angles(t)
    c, s = np.cos(ang), np.sin(ang)
    P, K = ang.shape
    w = im.w.astype(float)
    val = np.empty((P, 2 * K))
    val[:, 0::2] = im.r * c
    val[:, 1::2] = im.r * s
    d1 = np.empty((P, 2 * K, im.n))
    d1[:, 0::2, :] = -(im.r * s)[:, :, None] * w
    d1[:, 1::2, :] = (im.r * c)[:, :, None] * w
    ww = np.einsum("ki,kj->kij", w, w)
    d2 = np.empty((P, 2 * K, im.n, im.n))
    d2[:, 0::2] = -(im.r * c)[:, :, None, None] * ww
    d2[:, 1::2] = -(im.r * s)[:, :, None, None] * ww
    if single:
        return val[0], d1[0], d2[0]
    return val, d1, d2


def induced_metric(spec: FrequencySpec) -> np.ndarray:
    w = spec.w.astype(float)
    return np.einsum("k,ki,kj->ij", spec.r**2, w, w)


def is_isometric(spec: FrequencySpec, tol: float = 1e-9) -> tuple[bool, float]:
    if tol <= 0:
        raise ValueError("tol must be positive")
    defect = float(np.max(np.abs(induced_metric(spec) - np.eye(spec.n))))
    return defect <= tol, defect


def enclosing_radius(spec: FrequencySpec) -> float:
    return math.sqrt(float(np.sum(spec.r**2)))


def homothety_compress(spec: FrequencySpec, i: float, j: int) -> FrequencySpec:
    """The map t -> f(j t) / i: radii divided by i, frequencies multiplied by j.

    The induced metric scales by j^2 / i^2 and the curvature by exactly i.
    """
    if not i > 0:
        raise ValueError("i must be positive")
    if int(j) != j or j < 1:
        raise ValueError("j must be a positive integer")
    j = int(j)
    return FrequencySpec(spec.n, spec.w * j, spec.r / i, np.mod(spec.phi, TWO_PI))
