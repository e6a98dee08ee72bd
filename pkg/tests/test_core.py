import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from edreg.core import (
    DirectionSet,
    DiscreteVectorMeasure,
    KernelSpec,
    MomentPath,
    PointCloud,
    min_pairwise_distance,
    sample_sphere,
    sphere_direction,
    tv_norm,
    zero_mean_project,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


class TestTypes:
    def test_point_cloud_rejects_nan(self):
        with pytest.raises(ValueError):
            PointCloud(np.array([[0.0, np.nan]]))

    def test_point_cloud_is_read_only(self):
        pc = PointCloud(np.zeros((3, 2)))
        with pytest.raises(ValueError):
            pc.points[0, 0] = 1.0

    def test_measure_shape_mismatch(self):
        with pytest.raises(ValueError):
            DiscreteVectorMeasure(np.zeros((3, 2)), np.zeros((2, 2)))

    def test_moment_path_vector_roundtrip(self, rng):
        path = MomentPath(rng.normal(size=(4, 5, 2)), rng.normal(size=(4, 2)))
        back = MomentPath.from_vector(path.to_vector(), 4, 5, 2, True)
        np.testing.assert_array_equal(back.momenta, path.momenta)
        np.testing.assert_array_equal(back.translations, path.translations)

    def test_kernel_spec_validation(self):
        with pytest.raises(ValueError):
            KernelSpec.gaussian(0.0)
        with pytest.raises(ValueError):
            KernelSpec.ms_spline(1, 2.0).validate_dimension(2)
        assert KernelSpec.energy_distance().polynomial_degree == 0
        assert KernelSpec.gaussian(1.0).polynomial_degree == -1

    def test_ms_spline_recovers_energy_distance_exponent(self):
        for d in (1, 2, 3):
            assert KernelSpec.ms_spline(1, (d - 1) / 2).spline_exponent(d) == 0.5


class TestTvNorm:
    def test_examples(self):
        assert tv_norm(np.zeros((4, 2))) == 0.0
        assert tv_norm(np.array([[3.0, 4.0]])) == 5.0
        assert tv_norm(np.array([[1.0, 0.0], [-1.0, 0.0]])) == 2.0

    @given(arrays(np.float64, (6, 3), elements=finite), st.floats(-10, 10))
    def test_homogeneous(self, g, c):
        np.testing.assert_allclose(tv_norm(c * g), abs(c) * tv_norm(g), rtol=1e-12, atol=1e-9)


class TestZeroMeanProject:
    def test_examples(self):
        np.testing.assert_array_equal(zero_mean_project(np.full((3, 2), 7.0)), 0.0)
        np.testing.assert_array_equal(zero_mean_project(np.array([[1.0], [3.0]])), [[-1.0], [1.0]])

    @given(arrays(np.float64, (5, 2), elements=finite))
    def test_idempotent_and_centered(self, p):
        q = zero_mean_project(p)
        np.testing.assert_allclose(q.sum(axis=0), 0.0, atol=1e-12 * max(1.0, np.abs(p).max()) * 5)
        np.testing.assert_allclose(zero_mean_project(q), q, atol=1e-12 * max(1.0, np.abs(p).max()))

    def test_batched_over_time(self, rng):
        p = rng.normal(size=(3, 4, 2))
        q = zero_mean_project(p)
        for t in range(3):
            np.testing.assert_allclose(q[t], zero_mean_project(p[t]))


class TestSampleSphere:
    def test_unit_norm(self):
        for d in (2, 3, 5, 10):
            dirs = sample_sphere(7, "test", 0, 257, d)
            np.testing.assert_allclose(np.linalg.norm(dirs.directions, axis=1), 1.0, atol=1e-12)

    def test_d1_signs(self):
        dirs = sample_sphere(3, "test", 0, 64, 1).directions
        assert set(np.unique(dirs)) <= {-1.0, 1.0}
        assert len(np.unique(dirs)) == 2

    def test_deterministic(self):
        a = sample_sphere(11, "flow", (2, 5), 50, 3).directions
        b = sample_sphere(11, "flow", (2, 5), 50, 3).directions
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        a = sample_sphere(11, "flow", 0, 8, 3).directions
        assert not np.array_equal(a, sample_sphere(12, "flow", 0, 8, 3).directions)
        assert not np.array_equal(a, sample_sphere(11, "loss", 0, 8, 3).directions)
        assert not np.array_equal(a, sample_sphere(11, "flow", 1, 8, 3).directions)

    def test_order_independent(self):
        # any index can be regenerated alone, and prefixes agree
        full = sample_sphere(5, "x", 3, 40, 3).directions
        np.testing.assert_array_equal(sample_sphere(5, "x", 3, 10, 3).directions, full[:10])
        for i in (39, 0, 17):
            np.testing.assert_array_equal(sphere_direction(5, "x", 3, i, 3), full[i])

    def test_uniform_mean(self):
        dirs = sample_sphere(0, "x", 0, 20000, 3).directions
        np.testing.assert_allclose(dirs.mean(axis=0), 0.0, atol=0.03)
        np.testing.assert_allclose((dirs ** 2).mean(axis=0), 1 / 3, atol=0.02)

    def test_direction_set_validates(self):
        with pytest.raises(ValueError):
            DirectionSet(np.array([[1.0, 1.0]]), 0, "x", (0,))


class TestMinPairwiseDistance:
    def test_examples(self):
        assert min_pairwise_distance(np.array([[0.0], [1.0]])) == 1.0
        assert min_pairwise_distance(np.array([[0.0, 1.0], [0.0, 1.0], [3.0, 0.0]])) == 0.0
        square = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        assert min_pairwise_distance(square) == 1.0

    def test_single_point_is_error(self):
        with pytest.raises(ValueError):
            min_pairwise_distance(np.zeros((1, 2)))
