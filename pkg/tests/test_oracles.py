import numpy as np
import pytest

from edreg import _exact
from edreg.core import KernelSpec
from edreg.kernels import mmd_loss
from edreg.oracles import brute_force_mmd, brute_force_mmd_gradient, two_particle_path, two_particle_solution


class TestTwoParticleSolution:
    def test_endpoints(self):
        g, r, _ = two_particle_solution(1.0, 0.04, 0.0)
        assert (g, r) == pytest.approx((0.8, 1.0))
        assert two_particle_solution(1.0, 0.04, 1.0)[1] == pytest.approx(0.04, rel=1e-12)
        assert two_particle_solution(1.0, 0.04, 0.3)[2] == pytest.approx(0.64, rel=1e-12)

    def test_rejects_bad_eps(self):
        with pytest.raises(ValueError):
            two_particle_solution(1.0, 1.0, 0.5)
        with pytest.raises(ValueError):
            two_particle_solution(1.0, 0.0, 0.5)

    def test_energy_constant_in_time(self):
        e = [two_particle_solution(2.0, 0.3, t)[2] for t in np.linspace(0, 1, 11)]
        np.testing.assert_allclose(e, e[0], rtol=1e-12)

    def test_satisfies_gap_ode(self):
        # dr/dt = -2 gamma r; the central difference error is O(h^2)
        for h in (1e-3, 1e-4):
            t = 0.5
            r_p = two_particle_solution(1.0, 0.04, t + h)[1]
            r_m = two_particle_solution(1.0, 0.04, t - h)[1]
            g, r, _ = two_particle_solution(1.0, 0.04, t)
            assert (r_p - r_m) / (2 * h) == pytest.approx(-2 * g * r, rel=10 * h)

    def test_path_layout(self):
        X0, P = two_particle_path(1.0, 0.04, 10)
        np.testing.assert_array_equal(X0, [[-0.5, 0.0], [0.5, 0.0]])
        np.testing.assert_allclose(P[0], [[0.8, 0.0], [-0.8, 0.0]])
        np.testing.assert_array_equal(P.sum(axis=1), 0.0)


class TestBruteForceGradient:
    def test_identical_clouds(self, rng):
        X = rng.normal(size=(5, 2))
        np.testing.assert_allclose(brute_force_mmd_gradient(X, X, "energy_distance"), 0.0, atol=1e-14)

    def test_one_dimensional_pair(self):
        # L(x) = 2|x - 1|, so dL/dx = 2 sign(x - 1) = -2 at x = 0
        g = brute_force_mmd_gradient([[0.0]], [[1.0]], "energy_distance")
        np.testing.assert_allclose(g, [[-2.0]])

    @pytest.mark.parametrize("kernel", [KernelSpec.energy_distance(), KernelSpec.gaussian(0.8)])
    def test_finite_differences(self, rng, kernel):
        X, Y = rng.normal(size=(6, 2)), rng.normal(size=(4, 2))
        g = brute_force_mmd_gradient(X, Y, kernel)
        h = 1e-6
        fd = np.zeros_like(X)
        for i in range(6):
            for a in range(2):
                E = np.zeros_like(X)
                E[i, a] = h
                fd[i, a] = (brute_force_mmd(X + E, Y, kernel) - brute_force_mmd(X - E, Y, kernel)) / (2 * h)
        np.testing.assert_allclose(g, fd, atol=1e-6)

    @pytest.mark.parametrize("kernel", [KernelSpec.energy_distance(), KernelSpec.gaussian(0.8)])
    def test_fast_paths_agree(self, rng, kernel):
        X, Y = rng.normal(size=(7, 3)), rng.normal(size=(5, 3))
        v, g = _exact.mmd_value_and_grad(X, Y, *_exact.kernel_code(kernel, 3))
        assert v == pytest.approx(brute_force_mmd(X, Y, kernel), rel=1e-12)
        assert v == pytest.approx(mmd_loss(kernel, X, Y), rel=1e-12)
        np.testing.assert_allclose(g, brute_force_mmd_gradient(X, Y, kernel), rtol=1e-10, atol=1e-14)
