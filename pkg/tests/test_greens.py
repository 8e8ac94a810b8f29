import numpy as np
import pytest

from opkl import datagen as dg
from opkl import fnspace as fs
from opkl import greens as gr
from opkl import kernels as kn
from opkl import sgd
from opkl.errors import InvalidArgumentError, ShapeError

G257 = fs.make_uniform_grid(257)


def _kernel(n=33, ell=0.2):
    g = fs.make_uniform_grid(n)
    k = kn.ScalarKernelSpec("gaussian", ell)
    return kn.SeparableGreen(k, k, g, g)


def test_oracle_structure():
    G = gr.poisson_green_oracle(G257)
    x = G257.points
    np.testing.assert_allclose(np.diag(G), x * (1 - x))
    assert np.all(G[0] == 0) and np.all(G[-1] == 0)
    np.testing.assert_array_equal(G, G.T)
    with pytest.raises(InvalidArgumentError):
        gr.poisson_green_oracle(fs.make_uniform_grid(5, -1, 1))


def test_oracle_against_finite_differences():
    f = fs.GridFn.from_callable(G257, lambda x: np.sin(np.pi * x))
    u = gr.apply_green(gr.poisson_green_oracle(G257), f)
    np.testing.assert_allclose(u.values, np.sin(np.pi * G257.points) / np.pi ** 2, atol=1e-4)
    # second-order finite differences for -u'' = f with zero boundary values
    h = 1 / 256
    n = 255
    A = (np.diag(np.full(n, 2.0)) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)) / h ** 2
    u_fd = np.linalg.solve(A, f.values[1:-1])
    np.testing.assert_allclose(u.values[1:-1], u_fd, atol=1e-5)


def test_apply_green_constant_forcing():
    f = fs.GridFn(G257, np.ones(257))
    u = gr.apply_green(gr.poisson_green_oracle(G257), f)
    x = G257.points
    np.testing.assert_allclose(u.values, x * (1 - x) / 2, atol=1e-4)
    assert np.all(gr.apply_green(np.zeros((257, 257)), f).values == 0)


def test_apply_green_linear(rng):
    g = fs.make_uniform_grid(40)
    G = rng.standard_normal((40, 40))
    f, h = rng.standard_normal(40), rng.standard_normal(40)
    lhs = gr.apply_green(G, 2.0 * f - 0.5 * h, g)
    rhs = 2.0 * gr.apply_green(G, f, g) - 0.5 * gr.apply_green(G, h, g)
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)
    batch = gr.apply_green(G, np.stack([f, h]), g)
    np.testing.assert_allclose(batch[1], gr.apply_green(G, h, g), rtol=1e-14)


def test_apply_green_shapes():
    g = fs.make_uniform_grid(5)
    with pytest.raises(ShapeError):
        gr.apply_green(np.zeros((5, 4)), fs.GridFn(g, np.ones(5)))
    with pytest.raises(InvalidArgumentError):
        gr.apply_green(np.zeros((5, 5)), np.ones(5))


def test_first_step(rng):
    K = _kernel()
    f, u = rng.standard_normal(33), rng.standard_normal(33)
    est = gr.green_sgd_step(gr.GreenEstimate.zero(K), K, sgd.OnlineSchedule(0.3, 0.5), 1, (f, u))
    np.testing.assert_allclose(est.assembled,
                               0.3 * np.outer(K.smooth_output(u), K.smooth_input(f)), rtol=1e-14)


def test_zero_residual_term(rng):
    K = _kernel()
    sched = sgd.OnlineSchedule(0.3, 0.5)
    est = gr.green_sgd_step(gr.GreenEstimate.zero(K), K, sched, 1, rng.standard_normal((2, 33)))
    f = rng.standard_normal(33)
    nxt = gr.green_sgd_step(est, K, sched, 2, (f, est.predict(K, f)))
    np.testing.assert_allclose(nxt.assembled, est.assembled, rtol=0, atol=1e-15)
    np.testing.assert_allclose(nxt.reassemble(), nxt.assembled, rtol=0, atol=1e-13)


def test_assembled_matches_operator_recursion(rng):
    # h_{t+1}(f) = h_t(f) - eta_t <f, K2 f_t> K1 r_t
    K = _kernel()
    sched = sgd.OnlineSchedule(0.5, 0.5)
    est = gr.GreenEstimate.zero(K)
    probe = rng.standard_normal(33)
    h = np.zeros(33)
    for t in range(1, 8):
        f, u = rng.standard_normal(33), rng.standard_normal(33)
        r = est.predict(K, f) - u
        h = h - sgd.step_size(sched, t) * kn.apply_opkernel(K, probe, f, r)
        est = gr.green_sgd_step(est, K, sched, t, (f, u))
    np.testing.assert_allclose(est.predict(K, probe), h, rtol=0, atol=1e-10 * np.abs(h).max())


def test_agrees_with_generic_learner(rng):
    K = _kernel(17)
    F, U = rng.standard_normal((12, 17)), rng.standard_normal((12, 17))
    sched = sgd.OnlineSchedule(0.4, 0.5)
    state, _ = sgd.run(sgd.Dataset(F, U), K, sched, metrics_every=12)
    est, _ = gr.run_green(gr.GreenDataset(F, U, K.grid_x, K.grid_y), K, sched, metrics_every=12)
    probes = rng.standard_normal((3, 17))
    np.testing.assert_allclose(est.predict(K, probes), sgd.predict_many(state, K, probes),
                               rtol=1e-10, atol=1e-12)


def test_zero_target_stays_zero(rng):
    K = _kernel()
    data = gr.GreenDataset(rng.standard_normal((20, 33)), np.zeros((20, 33)), K.grid_x, K.grid_y)
    est, rows = gr.run_green(data, K, sgd.OnlineSchedule(1.0, 0.5), metrics_every=5)
    assert np.all(est.assembled == 0)
    assert [r["t"] for r in rows] == [0, 5, 10, 15, 20]
    assert np.isnan(rows[-1]["pred_err"])


def test_poisson_recovery_small():
    grid = fs.make_uniform_grid(33)
    ds = dg.make_dataset(dg.PoissonForward(), dg.GpSpec(8.0), dg.NoiseSpec(0.01), 700, grid, 0)
    K = _kernel(33)
    data = gr.GreenDataset(ds.inputs[:600], ds.outputs[:600], grid, grid)
    _, rows = gr.run_green(data, K, sgd.OnlineSchedule(500.0, 0.5),
                           gr.poisson_green_oracle(grid), metrics_every=600,
                           heldout=(ds.inputs[600:], ds.clean[600:]), checkpoints=[50, 200])
    g = [r["green_rel_err"] for r in rows[1:]]
    p = [r["pred_err"] for r in rows[1:]]
    assert all(b < a for a, b in zip(g, g[1:]))
    assert p[-1] < p[0]


def test_weighted_frobenius():
    g = fs.make_uniform_grid(201)
    G = np.outer(g.points, np.ones(201))
    assert gr.weighted_frobenius(G, g, g) == pytest.approx(np.sqrt(1 / 3), rel=1e-4)


def test_reproducing_and_structure():
    K = _kernel(257)
    assert gr.reproducing_check(K, 5) <= 1e-8
    assert gr.isometry_check(K) <= 1e-10
    assert gr.psd_check(K, 50) >= -1e-8


def test_reproducing_single_term(rng):
    K = _kernel()
    f1, g1 = rng.standard_normal(33), rng.standard_normal(33)
    green = np.outer(K.smooth_output(g1), K.smooth_input(f1))
    rhs = np.sum(K.grid_y.weights * gr.apply_green(green, f1, K.grid_x) * g1)
    lhs = kn.output_inner(K, kn.apply_opkernel(K, f1, f1, g1), g1)
    assert rhs == pytest.approx(lhs, rel=1e-12)


def test_green_csv_round_trip(tmp_path, rng):
    gy, gx = fs.make_uniform_grid(7), fs.make_uniform_grid(9)
    G = rng.standard_normal((7, 9))
    p = tmp_path / "g.csv"
    gr.write_green_csv(G, p, gy, gx)
    assert p.read_text().startswith("# gridY=7 gridX=9 domain=[0,1]")
    back, by, bx = gr.read_green_csv(p)
    np.testing.assert_array_equal(back, G)
    assert by == gy and bx == gx
    with pytest.raises(ShapeError):
        gr.write_green_csv(G, p, gx, gy)


def test_dataset_validation():
    g = fs.make_uniform_grid(5)
    with pytest.raises(ShapeError):
        gr.GreenDataset(np.zeros((3, 5)), np.zeros((2, 5)), g, g)
    with pytest.raises(InvalidArgumentError):
        gr.GreenDataset.from_gridfns([], [])
    ds = gr.GreenDataset.from_gridfns([fs.GridFn(g, np.ones(5))], [fs.GridFn(g, np.zeros(5))])
    assert len(ds) == 1
