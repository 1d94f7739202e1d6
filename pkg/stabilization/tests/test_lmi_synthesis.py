import numpy as np
from django.test import SimpleTestCase
from scipy.signal import place_poles

from ..data_moments import accumulate_moments, build_consistency_set, sample_ellipsoid_boundary
from ..exceptions import DimensionError, SynthesisError
from ..lmi_synthesis import (
    FEASIBLE,
    INFEASIBLE,
    SynthesisResult,
    assemble_lmi,
    closed_loop_spectrum,
    corollary_rho_bound,
    evaluate_lmi,
    recover_gain,
    solve_lmi,
    spectral_abscissa,
    stability_set_membership,
    theta_closed_loop,
    verify_stabilization,
)
from ..signals_sim import sample_l2_ball, simulate_open_loop
from .helpers import plant_from_preset, preset_input


def _moments(name, delta=0.0, noise=None):
    coeffs, plant, filt, truth = plant_from_preset(name)
    w, v = noise or (None, None)
    T = 1.0 if name == "scalar_example" else 3.0
    traj, fdata = simulate_open_loop(plant, filt, preset_input(name), w, v, h=1e-4, T=T)
    return accumulate_moments(traj, fdata, delta * np.eye(plant.p))


class AssembleTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.coeffs, cls.plant, cls.filt, cls.truth = plant_from_preset("scalar_example")
        cls.moments = _moments("scalar_example")

    def test_problem_shape(self):
        prob = assemble_lmi(self.moments, self.filt)
        self.assertEqual(prob.size, 5)
        self.assertEqual(prob.constant.shape, (5, 5))
        self.assertAlmostEqual(prob.eps, 1e-8 * prob.scale)

    def test_constant_term(self):
        prob = assemble_lmi(self.moments, self.filt)
        L = self.filt.L
        np.testing.assert_allclose(prob.lhs(np.zeros((2, 2)), np.zeros((1, 2))), prob.constant)
        np.testing.assert_allclose(prob.constant[:2, :2], L @ self.moments.Y @ L.T)
        np.testing.assert_allclose(prob.constant[2:, 2:], self.moments.Z)

    def test_dimension_mismatch(self):
        _, _, reactor_filter, _ = plant_from_preset("batch_reactor")
        with self.assertRaises(DimensionError):
            assemble_lmi(self.moments, reactor_filter)

    def test_non_positive_eps(self):
        with self.assertRaises(SynthesisError):
            assemble_lmi(self.moments, self.filt, eps=-1.0)

    def test_negative_decay_rate(self):
        with self.assertRaises(SynthesisError):
            assemble_lmi(self.moments, self.filt, decay_rate=-0.5)

    def test_decay_rate_shifts_the_filter(self):
        prob = assemble_lmi(self.moments, self.filt, decay_rate=1.5)
        np.testing.assert_allclose(prob.shifted_F, self.filt.F + 1.5 * np.eye(2))
        P, Q = np.eye(2), np.zeros((1, 2))
        shift = prob.lhs(P, Q) - assemble_lmi(self.moments, self.filt).lhs(P, Q)
        np.testing.assert_allclose(shift[:2, :2], -3.0 * np.eye(2), atol=1e-12)


class GainRecoveryTests(SimpleTestCase):
    def test_k_times_p_is_q(self):
        P = np.array([[2.0, 0.5], [0.5, 1.0]])
        Q = np.array([[1.0, -3.0]])
        np.testing.assert_allclose(recover_gain(P, Q) @ P, Q)

    def test_verify_needs_feasible_result(self):
        _, _, filt, truth = plant_from_preset("scalar_example")
        with self.assertRaises(SynthesisError):
            verify_stabilization(SynthesisResult(status=INFEASIBLE), truth.Theta_star, filt)

    def test_unknown_objective(self):
        _, _, filt, _ = plant_from_preset("scalar_example")
        prob = assemble_lmi(_moments("scalar_example"), filt)
        with self.assertRaises(SynthesisError):
            solve_lmi(prob, objective="max_volume")


class NoiseFreeSynthesisTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.coeffs, cls.plant, cls.filt, cls.truth = plant_from_preset("scalar_example")
        cls.moments = _moments("scalar_example")
        cls.prob = assemble_lmi(cls.moments, cls.filt)
        cls.result = solve_lmi(cls.prob)

    def test_feasible_and_round_trip(self):
        self.assertEqual(self.result.status, FEASIBLE)
        lmi_margin, p_margin = evaluate_lmi(self.prob, self.result.P, self.result.Q)
        self.assertGreaterEqual(lmi_margin, self.prob.eps * (1.0 - 1e-6))
        self.assertGreaterEqual(p_margin, self.prob.eps * (1.0 - 1e-6))
        np.testing.assert_allclose(self.result.K @ self.result.P, self.result.Q, atol=1e-9)

    def test_true_plant_is_stabilized(self):
        stabilized, abscissa = verify_stabilization(self.result, self.truth.Theta_star, self.filt)
        self.assertTrue(stabilized)
        self.assertLess(abscissa, 0.0)

    def test_spectrum_contains_filter_pole(self):
        spectrum = closed_loop_spectrum(self.plant, self.filt, self.result.K, self.truth)
        self.assertEqual(spectrum.size, 3)
        self.assertLess(np.abs(spectrum + 2.0).min(), 1e-6)
        self.assertLess(spectrum.real.max(), 0.0)

    def test_min_trace_objective(self):
        result = solve_lmi(self.prob, objective="min_trace")
        self.assertEqual(result.status, FEASIBLE)
        self.assertGreater(np.linalg.eigvalsh(result.P).min(), 0.0)

    def test_inflated_delta_is_not_feasible(self):
        moments = _moments("scalar_example", noise=self._noise()).with_delta([[7.1045e-4 * 1e6]])
        result = solve_lmi(assemble_lmi(moments, self.filt))
        self.assertEqual(result.status, INFEASIBLE)
        self.assertIsNone(result.K)

    def test_destabilizing_parameter_is_rejected(self):
        M = self.filt.F + self.filt.G @ self.result.K
        placed = place_poles(M, self.filt.L, [1.0, -3.0])
        Theta = np.hstack([self.truth.H0, -placed.gain_matrix])
        stabilized, abscissa = verify_stabilization(self.result, Theta, self.filt)
        self.assertFalse(stabilized)
        self.assertAlmostEqual(abscissa, 1.0, places=6)

    def test_max_decay_objective(self):
        result = solve_lmi(self.prob, objective="max_decay")
        self.assertEqual(result.status, FEASIBLE)
        self.assertEqual(result.diagnostics["objective"], "max_decay")
        decay_rate = result.diagnostics["decay_rate"]
        self.assertGreater(decay_rate, 0.0)
        Theta_hat = build_consistency_set(self.moments).Theta_hat
        _, abscissa = verify_stabilization(result, Theta_hat, self.filt)
        self.assertLess(abscissa, -decay_rate)

    @staticmethod
    def _noise():
        return (
            sample_l2_ball(1, 50, 1.0, 0.8e-3, seed=0, on_sphere=True),
            sample_l2_ball(1, 50, 1.0, 0.3e-3, seed=1, on_sphere=True),
        )


class NoisySynthesisTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.coeffs, cls.plant, cls.filt, cls.truth = plant_from_preset("scalar_example")
        noise = (
            sample_l2_ball(1, 50, 1.0, 0.8e-3, seed=0, on_sphere=True),
            sample_l2_ball(1, 50, 1.0, 0.3e-3, seed=1, on_sphere=True),
        )
        cls.moments = _moments("scalar_example", delta=7.1045e-4, noise=noise)
        cls.cs = build_consistency_set(cls.moments)
        cls.result = solve_lmi(assemble_lmi(cls.moments, cls.filt), objective="max_decay")

    def test_feasible(self):
        self.assertEqual(self.result.status, FEASIBLE)

    def test_every_consistent_parameter_is_stabilized(self):
        decay_rate = self.result.diagnostics["decay_rate"]
        samples = sample_ellipsoid_boundary(self.cs, seed=0, count=500)
        samples += sample_ellipsoid_boundary(self.cs, seed=1, count=500, boundary=False)
        for Theta in samples:
            stabilized, abscissa = verify_stabilization(self.result, Theta, self.filt)
            self.assertTrue(stabilized)
            self.assertLess(abscissa, -decay_rate)

    def test_true_closed_loop_spectrum(self):
        spectrum = closed_loop_spectrum(self.plant, self.filt, self.result.K, self.truth)
        nearest = int(np.argmin(np.abs(spectrum + 2.0)))
        self.assertLess(abs(spectrum[nearest] + 2.0), 1e-6)
        others = np.delete(spectrum, nearest)
        self.assertEqual(others.size, 2)
        self.assertTrue(np.all(others.real < -1.0), others)
        self.assertLessEqual(spectrum.real.max(), -1.9)

    def test_membership_implies_hurwitz(self):
        Theta = self.truth.Theta_star
        member, worst = stability_set_membership(self.result.P, self.result.K, Theta, self.filt)
        self.assertTrue(member)
        self.assertLess(worst, 0.0)
        self.assertLess(spectral_abscissa(theta_closed_loop(Theta, self.result.K, self.filt)), 0.0)


class ReactorSynthesisTests(SimpleTestCase):
    def test_noise_free_reactor(self):
        _, plant, filt, truth = plant_from_preset("batch_reactor")
        moments = _moments("batch_reactor")
        cs = build_consistency_set(moments)
        self.assertLessEqual(np.abs(cs.Theta_hat - truth.Theta_star).max(), 1e-4)
        result = solve_lmi(assemble_lmi(moments, filt))
        self.assertEqual(result.status, FEASIBLE)
        spectrum = closed_loop_spectrum(plant, filt, result.K, truth)
        self.assertEqual(spectrum.size, 12)
        self.assertLess(spectrum.real.max(), 0.0)


class CorollaryTests(SimpleTestCase):
    def test_rho_below_bound_is_feasible(self):
        _, _, filt, truth = plant_from_preset("scalar_example")
        rho_star, Omega, K = corollary_rho_bound(truth, filt)
        self.assertGreater(rho_star, 0.0)
        np.testing.assert_allclose(Omega, Omega.T)
        self.assertGreater(np.linalg.eigvalsh(Omega).min(), 0.0)
        self.assertLess(spectral_abscissa(filt.F + filt.L @ truth.H + filt.G @ K), 0.0)

        moments = _moments("scalar_example")
        lam_min = np.linalg.eigvalsh(moments.Z)[0]
        moments = moments.with_delta([[0.5 * rho_star * lam_min]])
        self.assertLessEqual(build_consistency_set(moments).rho, rho_star)
        self.assertEqual(solve_lmi(assemble_lmi(moments, filt)).status, FEASIBLE)

    def test_ell_range(self):
        _, _, filt, truth = plant_from_preset("scalar_example")
        with self.assertRaises(SynthesisError):
            corollary_rho_bound(truth, filt, ell=1.5)
