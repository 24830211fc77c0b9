import itertools
import math

import numpy as np
import pytest

from conftest import circle_max
from torusforge import FrequencySpec, is_isometric
from torusforge.curvature import normal_curvature_form, petrunin_bound, petrunin_product_check
from torusforge.design import (
    DesignSearchProblem,
    canonical,
    clifford_subtorus,
    delta_table,
    exhaustive,
    find_orthogonal_frame,
    frequency_pool,
    search,
    solve_weights,
    spec_from_weights,
    table_rows,
)

SQRT15 = math.sqrt(1.5)


def test_canonical_sign():
    assert canonical((-1, 2)) == (1, -2)
    assert canonical((0, -3)) == (0, 3)
    assert canonical((2, -1)) == (2, -1)


def test_pools():
    assert frequency_pool(2, "sign") == [(0, 1), (1, 0), (1, -1), (1, 1)]
    assert len(frequency_pool(3, "sign")) == 13
    pool = frequency_pool(2, "norm", 25)
    assert all(0 < w[0] ** 2 + w[1] ** 2 <= 25 for w in pool)
    assert len({canonical(w) for w in pool}) == len(pool)
    norms = [w[0] ** 2 + w[1] ** 2 for w in pool]
    assert norms == sorted(norms)
    assert sum(1 for x in norms if x == 25) == 6  # (5,0),(0,5),(3,+-4),(4,+-3)
    assert frequency_pool(1, "norm", 25) == [(1,), (2,), (3,), (4,), (5,)]
    with pytest.raises(ValueError):
        frequency_pool(2, "bogus")


def test_solve_weights_coordinate_frame():
    sol = solve_weights([(1, 0), (0, 1)])
    np.testing.assert_allclose(sol.weights, [1, 1], atol=1e-15)
    assert sol.R2 == pytest.approx(2.0)
    assert not solve_weights([(1, 0), (0, 1)], isotropic=True).feasible


def test_solve_weights_diagonal_pair():
    sol = solve_weights([(1, 1), (1, -1)])
    np.testing.assert_allclose(sol.weights, [0.5, 0.5], atol=1e-15)
    assert sol.R2 == pytest.approx(1.0)
    spec = spec_from_weights([(1, 1), (1, -1)], sol.weights)
    np.testing.assert_allclose(normal_curvature_form(spec).poly_coeffs(), [1, 0, 6, 0, 1], atol=1e-14)


def test_solve_weights_infeasible():
    sol = solve_weights([(1, 0), (1, 1)])
    assert sol.status == "infeasible" and not sol.feasible and sol.R2 == math.inf


def test_norm25_isotropic_design():
    pool = [w for w in frequency_pool(2, "norm", 25) if w[0] ** 2 + w[1] ** 2 == 25]
    sol = solve_weights(pool, isotropic=True)
    assert sol.feasible and sol.residual < 1e-12
    spec = spec_from_weights(pool, sol.weights)
    chk = petrunin_product_check(spec)
    # equal-norm isotropic solutions hit the Petrunin equality
    assert chk.product - chk.bound <= 1e-6
    assert sol.R2 == pytest.approx(2 / 25, rel=1e-12)


def brute_force_pairs(pool, n=2):
    """Independent oracle for K=2: direct 3x2 solve plus dense circle scan."""
    best = math.inf
    for a, b in itertools.combinations(pool, 2):
        W = np.array([a, b], float)
        A = np.array([W[:, 0] ** 2, W[:, 0] * W[:, 1], W[:, 1] ** 2])
        x, *_ = np.linalg.lstsq(A, [1, 0, 1], rcond=None)
        if np.max(np.abs(A @ x - [1, 0, 1])) > 1e-12 or np.any(x <= 0):
            continue
        Q = normal_curvature_form(FrequencySpec.from_modes([a, b], np.sqrt(x)))
        best = min(best, math.sqrt(circle_max(Q)) * math.sqrt(x.sum()))
    for a in pool:  # single modes cannot be isometric for n=2
        assert np.linalg.matrix_rank(np.array([a])) < 2
    return best


def test_exhaustive_sign_pairs_matches_oracle():
    res = exhaustive(DesignSearchProblem(2, 2, pool="sign"))
    oracle = brute_force_pairs(frequency_pool(2, "sign"))
    assert res.product == pytest.approx(oracle, abs=1e-9)
    assert res.product == pytest.approx(math.sqrt(2), abs=1e-9)
    assert res.delta_hat == pytest.approx(math.sqrt(2) - SQRT15, abs=1e-9)


def test_exhaustive_small_norm_pool_matches_oracle():
    pool = frequency_pool(2, "norm", 5)
    res = exhaustive(DesignSearchProblem(2, 2, pool="norm", norm_bound=5))
    assert res.product == pytest.approx(brute_force_pairs(pool), abs=1e-9)


def test_n1_optimum():
    res = search(DesignSearchProblem(1, 3, budget=1000))
    assert res.product == pytest.approx(1.0, abs=1e-12)
    assert abs(res.delta_hat) < 1e-12


def test_result_invariants():
    res = search(DesignSearchProblem(2, 6, budget=300, seed=3))
    assert res.found
    assert np.all(res.weights >= 0)
    W = np.array(res.frequencies, float)
    np.testing.assert_allclose(np.einsum("k,ki,kj->ij", res.weights, W, W), np.eye(2), atol=1e-9)
    assert is_isometric(res.spec, 1e-9)[0]
    assert petrunin_product_check(res.spec).passed
    assert res.delta_hat >= -1e-6
    d = res.to_dict()
    assert d["found"] and d["seed"] == 3


def test_search_deterministic():
    p = DesignSearchProblem(2, 8, budget=200, seed=11, chains=2)
    a, b = search(p), search(p)
    assert a.to_dict() == b.to_dict()


def test_n3_search_passes_petrunin():
    res = search(DesignSearchProblem(3, 7, pool="sign", budget=150, seed=1))
    assert res.found and petrunin_product_check(res.spec).passed
    assert res.product >= petrunin_bound(3) - 1e-6


def test_search_rejects_zero_budget():
    with pytest.raises(ValueError):
        search(DesignSearchProblem(2, 3, budget=0))


def test_delta_table_carry_forward():
    rows = delta_table(2, [2, 3, 4, 6], budget=200, seed=0)
    d = [r.delta_hat for r in rows]
    assert all(x >= y for x, y in zip(d, d[1:]))
    assert d[0] == pytest.approx(math.sqrt(2) - SQRT15, abs=1e-9)
    assert [r["N"] for r in table_rows(rows)] == [2, 3, 4, 6]


def test_delta_table_n1_zero():
    rows = delta_table(1, [1, 2, 3], budget=100)
    assert all(abs(r.delta_hat) < 1e-12 for r in rows)


def test_delta_table_rejects_small_N():
    with pytest.raises(ValueError):
        delta_table(3, [2])


@pytest.mark.parametrize("N", [2, 4])
def test_clifford_frames(N):
    A, why = find_orthogonal_frame(N, 2)
    assert why == "ok"
    np.testing.assert_array_equal(A.T @ A, N * np.eye(2, dtype=int))
    res = clifford_subtorus(N, 2)
    assert res.spec is not None
    assert is_isometric(res.spec, 1e-12)[0]
    from torusforge import enclosing_radius
    assert enclosing_radius(res.spec) == pytest.approx(1.0, abs=1e-14)


def test_clifford_n2_closed_form():
    res = clifford_subtorus(2, 2)
    assert res.curv == pytest.approx(math.sqrt(2), abs=1e-9)


def test_clifford_parity_obstruction():
    A, why = find_orthogonal_frame(3, 3)
    assert A is None and "square" in why
    res = clifford_subtorus(3, 2)
    assert res.spec is None and res.explanation


def test_clifford_n1():
    for N in (1, 2, 4, 5):
        res = clifford_subtorus(N, 1)
        assert res.product == pytest.approx(1.0, abs=1e-9)
