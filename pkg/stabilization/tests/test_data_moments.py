import numpy as np
from django.test import SimpleTestCase

from ..data_moments import (
    DataMoments,
    accumulate_moments,
    build_consistency_set,
    ellipsoid_membership,
    excitation_check,
    outer_ellipsoid_membership,
    sample_ellipsoid_boundary,
    trapezoid_weights,
)
from ..exceptions import DimensionError, ExcitationError, NoiseBoundError
from ..signals_sim import FilteredData, SignalSpec, sample_l2_ball, simulate_open_loop
from .helpers import plant_from_preset, preset_input


def _toy_moments(Delta=1.0, slack=0.25):
    # Theta_hat = [1, 2] and S_N = Delta - slack
    X = np.array([[-1.0], [-2.0]])
    return DataMoments(
        Y=np.array([[5.0 + slack]]), X=X, Z=np.eye(2), T=1.0, Delta=np.array([[Delta]])
    )


class ConsistencySetTests(SimpleTestCase):
    def test_least_squares_center_and_rho(self):
        cs = build_consistency_set(_toy_moments(Delta=1.0, slack=0.25))
        np.testing.assert_allclose(cs.Theta_hat, [[1.0, 2.0]])
        np.testing.assert_allclose(cs.S_N, [[0.75]])
        self.assertAlmostEqual(cs.rho, 1.0)
        np.testing.assert_allclose(cs.N, [[-4.25, 1.0, 2.0], [1.0, -1.0, 0.0], [2.0, 0.0, -1.0]])

    def test_center_is_a_member(self):
        cs = build_consistency_set(_toy_moments())
        member, margin = ellipsoid_membership(cs, cs.Theta_hat)
        self.assertTrue(member)
        self.assertAlmostEqual(margin, 0.75)

    def test_far_point_is_not_a_member(self):
        cs = build_consistency_set(_toy_moments())
        member, margin = ellipsoid_membership(cs, [[3.0, 2.0]])
        self.assertFalse(member)
        self.assertAlmostEqual(margin, 0.75 - 4.0)

    def test_membership_shape_is_checked(self):
        cs = build_consistency_set(_toy_moments())
        with self.assertRaises(DimensionError):
            ellipsoid_membership(cs, [[1.0, 2.0, 3.0]])

    def test_boundary_samples_lie_on_the_boundary(self):
        cs = build_consistency_set(_toy_moments())
        for Theta in sample_ellipsoid_boundary(cs, seed=0, count=50):
            member, margin = ellipsoid_membership(cs, Theta)
            self.assertTrue(member)
            self.assertAlmostEqual(margin, 0.0, places=10)

    def test_interior_samples_are_in_the_outer_set(self):
        cs = build_consistency_set(_toy_moments())
        for Theta in sample_ellipsoid_boundary(cs, seed=1, count=50, boundary=False):
            self.assertTrue(ellipsoid_membership(cs, Theta)[0])
            self.assertTrue(outer_ellipsoid_membership(cs, Theta)[0])

    def test_empty_set_cannot_be_sampled(self):
        cs = build_consistency_set(_toy_moments(Delta=0.1, slack=0.25))
        with self.assertRaises(NoiseBoundError):
            sample_ellipsoid_boundary(cs, seed=0, count=1)

    def test_singular_z_is_rejected(self):
        moments = DataMoments(
            Y=np.eye(1), X=np.zeros((2, 1)), Z=np.diag([1.0, 0.0]), T=1.0, Delta=np.eye(1)
        )
        self.assertFalse(excitation_check(moments)[0])
        with self.assertRaises(ExcitationError):
            build_consistency_set(moments)


class AccumulateMomentsTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.coeffs, cls.plant, cls.filt, cls.truth = plant_from_preset("scalar_example")
        cls.u = preset_input("scalar_example")

    def test_trapezoid_weights(self):
        weights = trapezoid_weights(np.linspace(0.0, 1.0, 5))
        np.testing.assert_allclose(weights, [0.125, 0.25, 0.25, 0.25, 0.125])

    def test_noise_free_estimate_matches_truth(self):
        traj, fdata = simulate_open_loop(self.plant, self.filt, self.u, None, None, h=1e-4, T=1.0)
        moments = accumulate_moments(traj, fdata, np.zeros((1, 1)))
        exciting, lam_min = excitation_check(moments)
        self.assertTrue(exciting)
        self.assertGreater(lam_min, 0.0)
        cs = build_consistency_set(moments)
        self.assertLessEqual(np.abs(cs.Theta_hat - self.truth.Theta_star).max(), 1e-4)
        self.assertEqual(cs.rho, 0.0)

    def test_block_is_psd(self):
        w = sample_l2_ball(1, 50, 1.0, 0.8e-3, seed=4)
        traj, fdata = simulate_open_loop(self.plant, self.filt, self.u, w, None, h=1e-4, T=1.0)
        moments = accumulate_moments(traj, fdata, np.zeros((1, 1)))
        self.assertEqual(moments.dim, 3)
        self.assertGreaterEqual(np.linalg.eigvalsh(moments.block()).min(), -1e-12)
        np.testing.assert_array_equal(moments.Z, moments.Z.T)

    def test_noisy_truth_is_in_the_set(self):
        w = sample_l2_ball(1, 50, 1.0, 0.8e-3, seed=8, on_sphere=True)
        v = sample_l2_ball(1, 50, 1.0, 0.3e-3, seed=9, on_sphere=True)
        traj, fdata = simulate_open_loop(self.plant, self.filt, self.u, w, v, h=1e-4, T=1.0)
        cs = build_consistency_set(accumulate_moments(traj, fdata, [[7.1045e-4]]))
        self.assertTrue(ellipsoid_membership(cs, self.truth.Theta_star)[0])
        self.assertTrue(outer_ellipsoid_membership(cs, self.truth.Theta_star)[0])
        self.assertAlmostEqual(cs.rho, 7.1045e-4 / np.linalg.eigvalsh(cs.Z)[0])

    def test_unexcited_data(self):
        traj, fdata = simulate_open_loop(
            self.plant, self.filt, SignalSpec.zero(1), None, None, h=1e-3, T=1.0
        )
        moments = accumulate_moments(traj, fdata, np.zeros((1, 1)))
        self.assertFalse(excitation_check(moments)[0])
        with self.assertRaises(ExcitationError):
            build_consistency_set(moments)

    def test_grid_mismatch(self):
        traj, fdata = simulate_open_loop(self.plant, self.filt, self.u, None, None, h=1e-3, T=1.0)
        shifted = FilteredData(t=fdata.t + 0.5, chi=fdata.chi, z_hat=fdata.z_hat)
        with self.assertRaises(DimensionError):
            accumulate_moments(traj, shifted, np.zeros((1, 1)))

    def test_delta_shape(self):
        traj, fdata = simulate_open_loop(self.plant, self.filt, self.u, None, None, h=1e-3, T=1.0)
        with self.assertRaises(DimensionError):
            accumulate_moments(traj, fdata, np.zeros((2, 2)))
