import warnings

import numpy as np
import pytest

from opkl import kernels as kn
from opkl import sgd
from opkl.errors import InvalidArgumentError, NumericError, ShapeError, StepSizeWarning

GAUSS = kn.ScalarKernelSpec("gaussian", 0.3)


def test_step_size_examples():
    assert sgd.step_size(sgd.OnlineSchedule(0.1, 0.5), 4) == pytest.approx(0.05)
    assert sgd.step_size(sgd.OnlineSchedule(0.37, 0.8), 1) == 0.37
    fin = sgd.FiniteSchedule(0.2, 0.5, 100)
    assert all(sgd.step_size(fin, t) == pytest.approx(0.02) for t in (1, 50, 100))
    np.testing.assert_allclose(sgd.step_sizes(fin, 100), 0.02)
    np.testing.assert_allclose(sgd.step_sizes(sgd.OnlineSchedule(1.0, 0.5), 4),
                               [1, 2 ** -0.5, 3 ** -0.5, 0.5])


def test_schedule_validation():
    for theta in (0.0, 1.0, -0.1):
        with pytest.raises(InvalidArgumentError):
            sgd.OnlineSchedule(0.1, theta)
    with pytest.raises(InvalidArgumentError):
        sgd.OnlineSchedule(-0.1, 0.5)
    with pytest.raises(InvalidArgumentError):
        sgd.FiniteSchedule(0.1, 0.5, 0)
    with pytest.raises(InvalidArgumentError):
        sgd.step_size(sgd.OnlineSchedule(0.1, 0.5), 0)
    with pytest.raises(InvalidArgumentError):
        sgd.step_size(sgd.FiniteSchedule(0.1, 0.5, 10), 11)


def test_schedule_bounds_gamma():
    # theta / (4 kappa^2 (1 + 2 kappa^2)(delta + 1)) with kappa = 1, delta = 1
    b = sgd.schedule_bounds(1.0, 0.5, delta=1.0)
    assert b.gamma == pytest.approx(0.5 / 24)
    bf = sgd.schedule_bounds(1.0, 0.5, mode="finite")
    assert bf.gamma == pytest.approx(0.5 / 24)
    assert b.max_step == pytest.approx(0.5 / 24)


def test_schedule_bounds_monotone_in_kappa():
    gs = [sgd.schedule_bounds(k2, 0.6).gamma for k2 in (0.5, 1.0, 2.0, 4.0)]
    assert all(a > b for a, b in zip(gs, gs[1:]))


def test_schedule_bounds_capacity():
    b = sgd.schedule_bounds(1.0, 0.5, trace_lks=2.0, s=0.5, capacity=True)
    assert b.gamma == pytest.approx(0.5 / (8 * 2.0 * 2 * 2))
    b1 = sgd.schedule_bounds(1.0, 0.75, trace_lks=1.0, s=1.0, capacity=True)
    assert b1.gamma == pytest.approx(0.5 / (16 * 2 * 2 * 0.75))
    with pytest.raises(InvalidArgumentError):
        sgd.schedule_bounds(1.0, 0.5, s=1.0, capacity=True)
    bf = sgd.schedule_bounds(1.0, 0.5, trace_lks=1.0, s=0.5, mode="finite", capacity=True)
    assert bf.gamma == pytest.approx(0.5 / (16 * 2 * 1.5))


def test_empty_state_predicts_zero():
    K = kn.Diagonal(GAUSS, 3)
    st = sgd.IterateState.empty(2, 3)
    np.testing.assert_array_equal(sgd.predict(st, K, [0.1, 0.2]), np.zeros(3))
    np.testing.assert_array_equal(sgd.predict_many(st, K, np.zeros((4, 2))), np.zeros((4, 3)))


def test_one_center():
    K = kn.Diagonal(GAUSS, 2)
    st = sgd.IterateState(np.array([[0.4]]), np.array([[1.5, -2.0]]))
    k = kn.eval_scalar(GAUSS, 0.1, 0.4)
    np.testing.assert_allclose(sgd.predict(st, K, 0.1), k * np.array([1.5, -2.0]), rtol=1e-15)


def test_first_step_coefficient():
    K = kn.Diagonal(GAUSS, 2)
    sched = sgd.OnlineSchedule(0.7, 0.5)
    st = sgd.sgd_step(sgd.IterateState.empty(1, 2), K, sched, (0.2, [1.0, -3.0]))
    np.testing.assert_allclose(st.coeffs, [[0.7, -2.1]])
    assert st.step_count == 1


def test_zero_residual_step(rng):
    K = kn.Diagonal(GAUSS, 1)
    sched = sgd.OnlineSchedule(0.5, 0.5)
    st = sgd.IterateState(rng.uniform(size=(3, 1)), rng.standard_normal((3, 1)))
    x = 0.37
    nxt = sgd.sgd_step(st, K, sched, (x, sgd.predict(st, K, x)))
    np.testing.assert_array_equal(nxt.coeffs[-1], 0.0)
    probes = np.linspace(-1, 2, 11)
    np.testing.assert_allclose(sgd.predict_many(nxt, K, probes), sgd.predict_many(st, K, probes),
                               rtol=0, atol=1e-15)


def test_three_step_hand_unroll():
    K = kn.Diagonal(GAUSS, 1)
    sched = sgd.OnlineSchedule(0.5, 0.5)
    xs, ys = [0.1, 0.5, 0.3], [1.0, -1.0, 2.0]
    k = lambda a, b: np.exp(-0.5 * ((a - b) / 0.3) ** 2)
    e = [0.5, 0.5 / np.sqrt(2), 0.5 / np.sqrt(3)]
    c1 = e[0] * ys[0]
    c2 = -e[1] * (c1 * k(xs[1], xs[0]) - ys[1])
    c3 = -e[2] * (c1 * k(xs[2], xs[0]) + c2 * k(xs[2], xs[1]) - ys[2])
    st = sgd.IterateState.empty(1, 1)
    for x, y in zip(xs, ys):
        st = sgd.sgd_step(st, K, sched, (x, [y]))
    np.testing.assert_allclose(st.coeffs.ravel(), [c1, c2, c3], rtol=1e-12)


def test_run_matches_grid_functional_oracle(rng):
    # oracle stores h_t on a dense grid; inputs are grid nodes so h_t(x_t) is a lookup
    grid = np.linspace(0, 1, 401)
    K = kn.Diagonal(GAUSS, 2, [1.0, 0.5])
    sched = sgd.OnlineSchedule(0.6, 0.4)
    idx = rng.integers(0, grid.size, 10)
    X, Y = grid[idx], rng.standard_normal((10, 2))
    H = np.zeros((grid.size, 2))
    Kg = GAUSS.pairwise(grid, grid)
    for t, (i, y) in enumerate(zip(idx, Y), start=1):
        H = H - sgd.step_size(sched, t) * Kg[:, [i]] * ((H[i] - y) * K.diag_t)
    state, rows = sgd.run(sgd.Dataset(X, Y), K, sched)
    np.testing.assert_allclose(sgd.predict_many(state, K, grid), H, rtol=0, atol=1e-10)
    # pure step and buffered run agree
    st = sgd.IterateState.empty(1, 2)
    for x, y in zip(X, Y):
        st = sgd.sgd_step(st, K, sched, (x, y))
    np.testing.assert_allclose(st.coeffs, state.coeffs, rtol=1e-14)


def test_run_rows_and_length(rng):
    X, Y = rng.uniform(size=25), rng.standard_normal(25)
    _, rows = sgd.run(sgd.Dataset(X, Y), kn.Diagonal(GAUSS, 1), sgd.OnlineSchedule(0.5, 0.5))
    assert len(rows) == 26
    assert [r["t"] for r in rows] == list(range(26))
    assert rows[0]["step_size"] == 0.0
    assert rows[1]["step_size"] == pytest.approx(0.5)
    _, rows = sgd.run(sgd.Dataset(X, Y), kn.Diagonal(GAUSS, 1), sgd.OnlineSchedule(0.5, 0.5),
                      metrics_every=10, checkpoints=[7])
    assert [r["t"] for r in rows] == [0, 7, 10, 20, 25]


def test_run_residual_decreases_on_single_section():
    # h_dagger = 2 k(., 0.5): noise-free data, visited residuals shrink
    rng = np.random.default_rng(3)
    X = rng.uniform(size=2000)
    Y = 2.0 * GAUSS.pairwise(X, [0.5])
    K = kn.Diagonal(GAUSS, 1)
    state, rows = sgd.run(sgd.Dataset(X, Y), K, sgd.OnlineSchedule(0.8, 0.5), metrics_every=2000)
    before = np.abs(Y).mean()
    after = np.abs(sgd.predict_many(state, K, X) - Y).mean()
    assert after <= before / 10
    assert rows[-1]["train_residual"] <= rows[0]["train_residual"] / 10


def test_metric_functions(rng):
    X, Y = rng.uniform(size=6), rng.standard_normal(6)
    seen = []
    fn = lambda st, t: seen.append((t, st.step_count)) or {"n": st.step_count}
    _, rows = sgd.run(sgd.Dataset(X, Y), kn.Diagonal(GAUSS, 1), sgd.OnlineSchedule(0.5, 0.5),
                      metric_fns=[fn], trial=4)
    assert seen == [(t, t) for t in range(7)]
    assert all(r["trial"] == 4 and r["n"] == r["t"] for r in rows)


def test_run_errors():
    K = kn.Diagonal(GAUSS, 1)
    with pytest.raises(InvalidArgumentError):
        sgd.run(sgd.Dataset(np.zeros((0, 1)), np.zeros((0, 1))), K, sgd.OnlineSchedule(0.5, 0.5))
    with pytest.raises(InvalidArgumentError):
        sgd.run(sgd.Dataset(np.zeros(3), np.zeros(3)), K, sgd.FiniteSchedule(0.5, 0.5, 4))
    with pytest.raises(ShapeError):
        sgd.Dataset(np.zeros(3), np.zeros(4))
    with pytest.raises(InvalidArgumentError):
        sgd.Dataset(np.zeros(3), [1.0, np.nan, 1.0])
    with pytest.raises(NumericError), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sgd.run(sgd.Dataset(np.zeros(3), np.full(3, 1e200)), K, sgd.OnlineSchedule(1e200, 0.5))


def test_finite_schedule_uses_horizon(rng):
    X, Y = rng.uniform(size=30), rng.standard_normal(30)
    state, rows = sgd.run(sgd.Dataset(X, Y), kn.Diagonal(GAUSS, 1), sgd.FiniteSchedule(1.0, 0.5, 20))
    assert state.step_count == 20 and rows[-1]["t"] == 20


def test_step_size_warning():
    X, Y = np.linspace(0, 1, 5), np.zeros(5)
    with pytest.warns(StepSizeWarning):
        sgd.run(sgd.Dataset(X, Y), kn.Diagonal(GAUSS, 1), sgd.OnlineSchedule(1.5, 0.5))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sgd.run(sgd.Dataset(X, Y), kn.Diagonal(GAUSS, 1), sgd.OnlineSchedule(0.5, 0.5))


def test_record_times():
    assert sgd.record_times(10, 4) == [0, 4, 8, 10]
    assert sgd.record_times(3, 1) == [0, 1, 2, 3]
    with pytest.raises(InvalidArgumentError):
        sgd.record_times(3, 0)
