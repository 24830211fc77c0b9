import numpy as np
import pytest
from scipy.optimize import linprog, minimize_scalar

from torusforge import FrequencySpec

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_isometric_spec(rng: np.random.Generator, n: int, extra: int = 3, max_entry: int = 3) -> FrequencySpec:
    """Random integer pool plus random positive LP costs; retries until the metric LP is feasible."""
    iu, ju = np.triu_indices(n)
    while True:
        K = n * (n + 1) // 2 + extra
        W = rng.integers(-max_entry, max_entry + 1, size=(K, n))
        W = W[np.any(W != 0, axis=1)]
        if len(W) < n or np.linalg.matrix_rank(W) < n:
            continue
        A = (W[:, iu] * W[:, ju]).T.astype(float)
        b = (iu == ju).astype(float)
        res = linprog(rng.uniform(0.5, 2.0, len(W)), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
        if res.status != 0:
            continue
        x = res.x
        keep = x > 1e-12
        # re-solve the equalities on the support for a clean isometry
        sol, *_ = np.linalg.lstsq(A[:, keep], b, rcond=None)
        if np.any(sol <= 0) or np.linalg.matrix_rank(W[keep]) < n:
            continue
        return FrequencySpec.from_modes(W[keep], np.sqrt(sol), seed=int(rng.integers(2**31)))


def circle_max(Q, res=20000):
    """Independent n=2 oracle: dense angle scan refined by bounded scalar minimization."""
    th = np.linspace(0, np.pi, res, endpoint=False)
    vals = Q(np.stack([np.cos(th), np.sin(th)], 1))
    best = -np.inf
    for k in np.argsort(vals)[-8:]:
        r = minimize_scalar(lambda a: -Q(np.array([np.cos(a), np.sin(a)])),
                            bounds=(th[k] - np.pi / res, th[k] + np.pi / res), method="bounded",
                            options={"xatol": 1e-13})
        best = max(best, -r.fun, vals[k])
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def circle():
    return FrequencySpec.from_modes([[1]], 1.0)


@pytest.fixture
def product_torus():
    return FrequencySpec.from_modes([[1, 0], [0, 1]], 1.0)
