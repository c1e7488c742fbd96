import numpy as np
import pytest
import scipy.sparse
from conftest import DOMAINS
from helpers import central_gradient, random_loop

from billiardcap.actionloop import (
    DiscreteLoop,
    SolverOptions,
    action,
    action_grad,
    action_hessian,
    cyclic_block_inertia,
    el_residual,
    find_critical_point,
    fixed_tau_hessian,
    kinetic_integral,
    make_seeds,
    morse_index_fixed_tau,
    negative_inertia,
    node_energy,
    optimal_tau,
    refine,
    remesh,
    resample_uniform,
)
from billiardcap.geometry import Ball, Domain, default_d0, domain_from_spec
from billiardcap.penalty import PenaltyConfig


def circle(N, R=0.5):
    t = np.arange(N) / N
    return np.column_stack([R * np.cos(2 * np.pi * t), R * np.sin(2 * np.pi * t)])


@pytest.fixture(scope="module")
def disk():
    return Domain(Ball((0.0, 0.0), 1.0))


class TestDiscreteLoop:
    @pytest.mark.parametrize("N", [30, 33])
    def test_node_count(self, N):
        with pytest.raises(ValueError):
            DiscreteLoop(np.zeros((N, 2)), 1.0)

    def test_tau_positive(self):
        with pytest.raises(ValueError):
            DiscreteLoop(circle(32), 0.0)

    def test_mesh_must_increase(self):
        mesh = np.arange(32) / 32
        mesh[5] = mesh[4]
        with pytest.raises(ValueError):
            DiscreteLoop(circle(32), 1.0, mesh)

    def test_pack_round_trip(self):
        loop = DiscreteLoop(circle(32), 2.5)
        again = loop.unpack(loop.pack())
        np.testing.assert_array_equal(again.points, loop.points)
        assert again.tau == 2.5

    def test_weights_sum_to_one(self, rng):
        mesh = np.sort(rng.uniform(0, 1, 64))
        loop = DiscreteLoop(np.zeros((64, 2)) + rng.standard_normal((64, 2)), 1.0, mesh)
        assert loop.weights.sum() == pytest.approx(1.0)
        assert loop.edges.sum() == pytest.approx(1.0)


class TestFunctional:
    def test_kinetic_integral_of_polygon(self):
        # regular N-gon inscribed in radius R: N chords of length 2R sin(pi/N)
        N, R, tau = 64, 0.5, 3.0
        loop = DiscreteLoop(circle(N, R), tau)
        expected = N * N * (2 * R * np.sin(np.pi / N)) ** 2 / tau
        assert kinetic_integral(loop) == pytest.approx(expected, rel=1e-13)

    def test_free_action_closed_form(self, disk):
        # eps = 0: A = K tau / 2 + tau E, with K tau independent of tau
        N, tau = 64, 2.0
        loop = DiscreteLoop(circle(N, 0.5), tau)
        cfg = PenaltyConfig(0.2, 0.0)
        chord2 = N * N * (2 * 0.5 * np.sin(np.pi / N)) ** 2
        assert action(disk, cfg, loop, 0.5) == pytest.approx(chord2 / (2 * tau) + 0.5 * tau)

    def test_constant_loop_in_plateau(self, disk):
        cfg = PenaltyConfig(0.25, 0.01)
        loop = DiscreteLoop(np.zeros((32, 2)) + [0.1, 0.0], 1.0)
        assert action(disk, cfg, loop, 0.5) == pytest.approx(0.5 - 0.01 / 0.375 ** 2)
        dG, dtau = action_grad(disk, cfg, loop, 0.5)
        assert np.all(dG == 0)
        assert dtau == pytest.approx(0.5 - 0.01 / 0.375 ** 2)

    def test_optimal_tau_is_stationary(self, disk):
        cfg = PenaltyConfig(0.25, 0.01)
        pts = circle(64, 0.8)
        tau = optimal_tau(disk, cfg, pts, 0.5)
        _, dtau = action_grad(disk, cfg, DiscreteLoop(pts, tau), 0.5)
        assert abs(dtau) < 1e-12

    @pytest.mark.parametrize("name", ["disk", "ellipse", "box"])
    def test_gradient_by_differences(self, name, rng):
        d = domain_from_spec(DOMAINS[name])
        cfg = PenaltyConfig(default_d0(d), 0.05)
        loop = random_loop(d, rng, graded=True, reach=0.95)
        dG, dtau = action_grad(d, cfg, loop, 0.5)
        g = np.append(dG.ravel(), dtau)
        fd = central_gradient(lambda x: action(d, cfg, loop.unpack(x), 0.5), loop.pack())
        assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(g)

    def test_sparse_and_dense_hessians_agree(self, rng):
        d = domain_from_spec(DOMAINS["ball3"])
        cfg = PenaltyConfig(default_d0(d), 0.05)
        loop = random_loop(d, rng, N=40, graded=True, reach=0.95)
        dense = action_hessian(d, cfg, loop, 0.5)
        sparse = action_hessian(d, cfg, loop, 0.5, sparse=True)
        assert scipy.sparse.issparse(sparse)
        np.testing.assert_allclose(sparse.toarray(), dense, atol=1e-12)
        np.testing.assert_allclose(dense, dense.T, atol=1e-12)
        np.testing.assert_allclose(fixed_tau_hessian(d, cfg, loop, sparse=True).toarray(),
                                   dense[:-1, :-1], atol=1e-12)


class TestInertia:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_block_count_matches_eigenvalues(self, n, rng):
        for N in (3, 4, 9, 32):
            A = rng.standard_normal((N, n, n))
            diag = A + np.swapaxes(A, 1, 2) + rng.uniform(-2, 4) * np.eye(n)
            off = rng.standard_normal(N)
            M = np.zeros((N * n, N * n))
            for i in range(N):
                j = (i + 1) % N
                M[i * n:(i + 1) * n, i * n:(i + 1) * n] = diag[i]
                M[i * n:(i + 1) * n, j * n:(j + 1) * n] += off[i] * np.eye(n)
                M[j * n:(j + 1) * n, i * n:(i + 1) * n] += off[i] * np.eye(n)
            expected = int(np.sum(np.linalg.eigvalsh(M) < -1e-9))
            assert cyclic_block_inertia(diag, off, 1e-9) == expected
            assert negative_inertia(M, 1e-9) == expected

    def test_morse_index_of_free_circle(self, disk):
        # eps = 0 at fixed tau: the discrete Laplacian is positive semidefinite
        cfg = PenaltyConfig(0.25, 0.0)
        loop = DiscreteLoop(circle(64, 0.5), 2.0)
        assert morse_index_fixed_tau(disk, cfg, loop) == 0


class TestSolver:
    def test_critical_point_in_disk(self, disk):
        cfg = PenaltyConfig(0.25, 0.02)
        seeds = make_seeds(disk, cfg, 64, 1, np.random.default_rng(0))
        cp = find_critical_point(disk, cfg, seeds[0])
        loop = cp.loop
        assert np.max(el_residual(disk, cfg, loop)) < 1e-6
        _, dtau = action_grad(disk, cfg, loop, 0.5)
        assert abs(dtau) < 1e-7
        # mean node energy equals E = 1/2 up to the discretization error
        assert np.mean(node_energy(disk, cfg, loop)) == pytest.approx(0.5, abs=1e-2)
        # a diameter bounce orbit: the period sits near the chord length 4
        assert 2.0 < loop.tau < 4.5

    def test_options_defaults(self):
        opts = SolverOptions()
        assert opts.tol < opts.stall_tol


class TestMeshes:
    def test_refine_doubles_and_keeps_curve(self):
        loop = DiscreteLoop(circle(64, 0.5), 1.0)
        fine = refine(loop)
        assert fine.N == 128
        np.testing.assert_array_equal(fine.points[::2], loop.points)
        np.testing.assert_allclose(np.linalg.norm(fine.points, axis=1), 0.5, atol=1e-7)

    def test_resample_uniform(self):
        loop = DiscreteLoop(circle(64, 0.5), 1.0)
        out = resample_uniform(loop, 96)
        assert out.uniform and out.N == 96
        np.testing.assert_allclose(np.linalg.norm(out.points, axis=1), 0.5, atol=1e-6)

    def test_remesh_concentrates_near_wall(self, disk):
        cfg = PenaltyConfig(0.25, 1e-3)
        t = np.arange(128) / 128
        x = 0.97 * np.cos(2 * np.pi * t)
        pts = np.column_stack([x, np.zeros_like(x) + 0.01 * np.sin(2 * np.pi * t)])
        loop = DiscreteLoop(pts, 4.0)
        out = remesh(disk, cfg, loop)
        near = np.abs(out.points[:, 0]) > 0.9
        assert near.sum() > np.sum(np.abs(loop.points[:, 0]) > 0.9)
