import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gmmvlim.core import FrequencySet, Grid2D, MeasurementConfig, SolverOptions
from gmmvlim.errors import GmmvError, SolverError
from gmmvlim.sensing import SensingOperator
from gmmvlim.solver import (_make_state, initial_tau, mixed_norm, newton_update_tau, optimality_gap,
                            pareto_derivative, project_l1_ball, project_l12_ball, row_norms,
                            solve_gmmv_cv, solve_gmmv_sigma, spark, spg_lasso_step, uniqueness_check)


def random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def toy_operator(seed, ncol=4, N=24, Q=10, cv=0):
    """One frequency, ``ncol`` sources with disjoint receiver blocks."""
    rng = np.random.default_rng(seed)
    G = random_complex(rng, (Q * ncol, N)) / np.sqrt(2 * Q)
    src = np.array([[10.0 + p, 0.0] for p in range(ncol)])
    rx = np.column_stack([np.full(Q * ncol, 20.0), np.arange(Q * ncol, dtype=float)])
    links = tuple(np.arange(Q) + Q * p for p in range(ncol))
    cvf = None if cv == 0 else tuple(np.arange(Q) % (Q // cv) == 0 for _ in range(ncol))
    cfg = MeasurementConfig(src, rx, links, cvf)
    return SensingOperator([G], Grid2D(0, 0, 1.0, N, 1), cfg, FrequencySet([1e9]))


# ---------------------------------------------------------------- norms


def test_mixed_norms_match_loops(rng):
    J = random_complex(rng, (7, 5))
    rows = [math.sqrt(sum(abs(J[n, c]) ** 2 for c in range(5))) for n in range(7)]
    assert mixed_norm(J, 1) == pytest.approx(sum(rows), rel=1e-12)
    assert mixed_norm(J, 2) == pytest.approx(math.sqrt(sum(r * r for r in rows)), rel=1e-12)
    assert mixed_norm(J, math.inf) == pytest.approx(max(rows), rel=1e-12)
    # strided view takes the generic path
    assert np.allclose(row_norms(J[:, ::2]), np.linalg.norm(J[:, ::2], axis=1), rtol=1e-14)


def test_mixed_norm_unsupported():
    with pytest.raises(GmmvError) as e:
        mixed_norm(np.ones((2, 2)), 1, 1)
    assert e.value.code == "UNSUPPORTED_NORM"


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 4)),
              elements=st.floats(-10, 10, allow_nan=False)))
def test_mixed_norm_duality(X):
    # |<X, Y>| <= ||X||_{1,2} ||Y||_{inf,2}, tight for Y = row directions of X
    v = row_norms(X)
    Y = np.divide(X, v[:, None], out=np.zeros_like(X), where=v[:, None] > 0)
    assert np.sum(X * Y) == pytest.approx(mixed_norm(X, 1) * max(mixed_norm(Y, math.inf), 0.0) if v.any()
                                          else 0.0, abs=1e-9)
    assert mixed_norm(X, math.inf) <= mixed_norm(X, 2) + 1e-12 <= mixed_norm(X, 1) + 2e-12


# ---------------------------------------------------------------- projection


def _bisection_l1(v, tau):
    lo, hi = 0.0, float(v.max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.maximum(v - mid, 0).sum() > tau:
            lo = mid
        else:
            hi = mid
    return np.maximum(v - hi, 0)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(0, 5)), st.floats(0.01, 8))
def test_l1_projection_matches_bisection(v, tau):
    p = project_l1_ball(v, tau)
    ref = v if v.sum() <= tau else _bisection_l1(v, tau)
    assert np.allclose(p, ref, atol=1e-9)


def socp_projection(J, tau):
    """Projection posed as a second-order cone program (real parameterisation)."""
    import cvxpy as cp
    A = np.hstack([J.real, J.imag])
    X = cp.Variable(A.shape)
    cp.Problem(cp.Minimize(0.5 * cp.sum_squares(X - A)),
               [cp.sum(cp.norm(X, 2, axis=1)) <= tau]).solve(solver="CLARABEL")
    c = J.shape[1]
    return X.value[:, :c] + 1j * X.value[:, c:]


@pytest.mark.parametrize("seed", range(5))
def test_l12_projection_matches_convex_program(seed):
    rng = np.random.default_rng(seed)
    J = random_complex(rng, (5, 3))
    tau = 0.4 * mixed_norm(J, 1)
    assert np.allclose(project_l12_ball(J, tau), socp_projection(J, tau), atol=1e-6, rtol=0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.0, 3.0))
def test_l12_projection_properties(seed, frac):
    rng = np.random.default_rng(seed)
    J = random_complex(rng, (6, 3))
    K = random_complex(rng, (6, 3))
    tau = frac * mixed_norm(J, 1)
    P = project_l12_ball(J, tau)
    assert mixed_norm(P, 1) <= tau * (1 + 1e-12) + 1e-12
    assert np.allclose(project_l12_ball(P, tau), P, atol=1e-12)
    # rows keep their direction
    assert np.all(np.abs(np.sum(np.conj(P) * J, axis=1).imag) < 1e-9)
    # non-expansive
    PK = project_l12_ball(K, tau)
    assert np.linalg.norm(P - PK) <= np.linalg.norm(J - K) + 1e-10
    # variational inequality: <J - P, X - P> <= 0 for X in the ball
    X = project_l12_ball(K, tau)
    assert np.vdot(J - P, X - P).real <= 1e-9


def test_projection_inside_ball_is_identity(rng):
    J = random_complex(rng, (4, 2))
    assert np.array_equal(project_l12_ball(J, mixed_norm(J, 1) * 1.01), J)
    assert not np.any(project_l12_ball(J, 0.0))
    with pytest.raises(GmmvError) as e:
        project_l12_ball(J, -1.0)
    assert e.value.code == "NEGATIVE_RADIUS"


# ---------------------------------------------------------------- Pareto curve


def test_newton_update():
    assert newton_update_tau(1.0, 0.5, -2.0, 0.1) == pytest.approx(1.2)
    # inexact slope pointing the wrong way -> doubling
    assert newton_update_tau(1.0, 0.5, -1e12, 0.6) == pytest.approx(1.0 - 0.1 / -1e12)
    assert newton_update_tau(1.0, 0.5, -1e300, 0.1) == 2.0
    with pytest.raises(GmmvError) as e:
        newton_update_tau(1.0, 0.5, 0.0, 0.1)
    assert e.value.code == "NONNEGATIVE_DERIVATIVE"
    with pytest.raises(GmmvError) as e:
        pareto_derivative(0.0, 1.0)
    assert e.value.code == "ZERO_RESIDUAL"


def test_initial_tau_is_newton_step_for_unit_data():
    assert initial_tau(1.0, 4.0) == pytest.approx(0.25)
    assert initial_tau(1.0, 4.0, 0.2) == pytest.approx(0.2)
    assert newton_update_tau(0.0, 1.0, pareto_derivative(1.0, 4.0), 0.2) == pytest.approx(0.2)


def _ls_tau(op, Y, tau, iters=3000):
    fwd = lambda J: op.forward(J, "all")
    adj = lambda R: op.adjoint(R, "all")
    st_ = _make_state(fwd, adj, np.zeros(op.shape_sources, complex), Y)
    for _ in range(iters):
        st_ = spg_lasso_step(st_, fwd, adj, Y, tau)
        if optimality_gap(st_, tau) < 1e-12:
            break
    return st_


def test_pareto_slope_matches_finite_difference():
    op = toy_operator(3)
    rng = np.random.default_rng(0)
    Y = np.where(op.mask("all"), random_complex(rng, op.shape_data), 0)
    tau, h = 0.8, 1e-4
    a = _ls_tau(op, Y, tau)
    b = _ls_tau(op, Y, tau + h)
    fd = (b.phi - a.phi) / h
    slope = pareto_derivative(a.phi, mixed_norm(a.G, math.inf))
    assert fd == pytest.approx(slope, rel=1e-3)


def test_spg_step_is_feasible_and_descends():
    op = toy_operator(4)
    rng = np.random.default_rng(1)
    Y = np.where(op.mask("all"), random_complex(rng, op.shape_data), 0)
    fwd = lambda J: op.forward(J, "all")
    adj = lambda R: op.adjoint(R, "all")
    s = _make_state(fwd, adj, np.zeros(op.shape_sources, complex), Y)
    best = s.f
    for _ in range(30):
        s = spg_lasso_step(s, fwd, adj, Y, 0.5)
        assert mixed_norm(s.J, 1) <= 0.5 * (1 + 1e-12)
    assert s.f < best


def test_spg_step_recovers_from_oversized_bb_step():
    op = toy_operator(4)
    s_op = float(op.block_norms().max())
    rng = np.random.default_rng(2)
    Y = np.where(op.mask("all"), random_complex(rng, op.shape_data), 0)
    fwd = lambda J: op.forward(J, "all") / s_op
    adj = lambda R: op.adjoint(R, "all") / s_op
    s = _make_state(fwd, adj, np.zeros(op.shape_sources, complex), Y)
    s.step = 1e9  # no halving sequence of 12 brings this below 1/L
    f0 = s.f
    s = spg_lasso_step(s, fwd, adj, Y, 1e6)
    assert s.f < f0


# ---------------------------------------------------------------- drivers


def test_sigma_mode_recovers_joint_sparse_matrix():
    op = toy_operator(5, ncol=6, N=30, Q=12)
    rng = np.random.default_rng(5)
    J = np.zeros(op.shape_sources, complex)
    supp = [3, 11, 20]
    J[supp] = random_complex(rng, (3, 6))
    Y = op.forward(J, "all")
    r = solve_gmmv_sigma(op, Y, 1e-6 * np.linalg.norm(Y))
    assert r.status == "converged"
    rn = row_norms(r.J)
    assert np.flatnonzero(rn > 1e-2 * rn.max()).tolist() == supp
    assert np.linalg.norm(r.J - J) / np.linalg.norm(J) < 1e-2
    assert abs(r.r_rec[-1] - 1e-6 * np.linalg.norm(Y)) <= 1e-4 * np.linalg.norm(Y)


def test_sigma_above_data_norm_returns_zero():
    op = toy_operator(6)
    Y = op.forward(np.ones(op.shape_sources, complex), "all")
    r = solve_gmmv_sigma(op, Y, 2 * np.linalg.norm(Y))
    assert not np.any(r.J) and r.n_iter == 0


def test_bad_data_rejected():
    op = toy_operator(6)
    with pytest.raises(SolverError) as e:
        solve_gmmv_sigma(op, np.zeros(op.shape_data), 0.1)
    assert e.value.code == "ZERO_DATA"
    Y = np.full(op.shape_data, np.nan, complex)
    with pytest.raises(SolverError) as e:
        solve_gmmv_sigma(op, Y, 0.1)
    assert e.value.code == "BAD_DATA"


def test_cv_mode_needs_split():
    op = toy_operator(7)
    Y = op.forward(np.ones(op.shape_sources, complex), "all")
    with pytest.raises(SolverError) as e:
        solve_gmmv_cv(op, Y)
    assert e.value.code == "NO_CV_SPLIT"


def test_cv_mode_on_small_scene(small_op, small_data):
    r = solve_gmmv_cv(small_op, small_data, SolverOptions(delta_n=10, max_iter=400))
    assert r.status in ("cv_stop", "exact_fit")
    assert r.n_iter - r.n_opt >= 10 or r.status == "exact_fit"
    assert r.r_cv[r.n_opt] == r.r_cv.min()
    assert r.J.shape == small_op.shape_sources
    assert r.r_rec.size == r.n_iter + 1


def test_cv_rows_do_not_drive_iterates(small_op, small_data):
    opts = SolverOptions(delta_n=5, max_iter=60)
    seen = []
    r1 = solve_gmmv_cv(small_op, small_data, opts, callback=lambda k, J: seen.append(J.copy()))
    Y = np.array(small_data.Y)
    cv = small_op.mask("cv")
    Y[cv] *= 1.7
    seen2 = []
    r2 = solve_gmmv_cv(small_op, Y, opts, callback=lambda k, J: seen2.append(J.copy()))
    n = min(len(seen), len(seen2))
    assert n > 5
    assert all(np.array_equal(a, b) for a, b in zip(seen[:n], seen2[:n]))
    assert not np.array_equal(r1.r_cv[:n], r2.r_cv[:n])


def test_max_iterations_carries_result(small_op, small_data):
    with pytest.raises(SolverError) as e:
        solve_gmmv_cv(small_op, small_data, SolverOptions(delta_n=500, max_iter=20))
    assert e.value.code == "MAX_ITERATIONS" and e.value.result.n_iter == 20


# ---------------------------------------------------------------- uniqueness


def test_spark_by_enumeration():
    A = np.array([[1, 0, 0, 1], [0, 1, 0, 0], [0, 0, 1, 0]], dtype=float)
    assert spark(A) == 2
    rng = np.random.default_rng(0)
    assert spark(rng.standard_normal((3, 5))) == 4
    assert spark(np.eye(3)) == 4
    with pytest.raises(GmmvError) as e:
        spark(np.ones((2, 30)))
    assert e.value.code == "TOO_LARGE_FOR_SPARK"


def test_uniqueness_condition():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((4, 8))                 # spark 5
    X = np.zeros((8, 3))
    X[[1, 4, 6]] = rng.standard_normal((3, 3))      # rank 3
    rep = uniqueness_check(X, A, P=3, I=2, Q=4)
    assert (rep.spark, rep.rank, rep.support_size) == (5, 3, 3)
    assert rep.satisfied and rep.guideline_pi_gt_q
    # a single column only allows supports below spark / 2
    rep1 = uniqueness_check(X[:, :1], A)
    assert rep1.rank == 1 and not rep1.satisfied
