import math
import tempfile
from pathlib import Path

import numpy as np
from django.conf import settings
from django.test import TestCase, override_settings, tag
from rest_framework.exceptions import ValidationError

from ..exceptions import PipelineError
from ..lmi_synthesis import FEASIBLE, NUMERICAL_FAILURE
from ..models import RunRecord, Study
from ..presets import get_preset
from ..services import (
    STAGE_GAIN,
    STAGE_INITIALIZATION,
    ExperimentService,
    build_setup,
    summarize_levels,
)
from ..utils import SUMMARY_COLUMNS, CsvExporter


class LoadConfigTests(TestCase):
    def test_presets_validate(self):
        for name in ("scalar_example", "batch_reactor"):
            cfg = ExperimentService.load_config(name)
            self.assertEqual(cfg["name"], name)
            self.assertIn("synthesis", cfg)

    def test_defaults_are_filled(self):
        cfg = get_preset("scalar_example")
        for key in ("x0", "step", "noise", "synthesis"):
            cfg.pop(key)
        cfg = ExperimentService.load_config(cfg)
        self.assertEqual(cfg["x0"], [0.0])
        self.assertEqual(cfg["step"], 1e-4)
        self.assertEqual(cfg["noise"]["delta_w"], 0.0)
        self.assertEqual(cfg["synthesis"]["solver"], "CLARABEL")

    def test_zero_gamma_filter_is_rejected(self):
        cfg = get_preset("scalar_example")
        cfg["filter"]["Gamma"] = [0.0]
        with self.assertRaises(ValidationError) as ctx:
            ExperimentService.load_config(cfg)
        self.assertIn("filter", ctx.exception.detail)

    def test_dimension_checks(self):
        cfg = get_preset("batch_reactor")
        cfg["x0"] = [0.0]
        cfg["input"]["channels"] = 1
        cfg["input"]["amplitudes"] = cfg["input"]["amplitudes"][:1]
        cfg["input"]["frequencies"] = cfg["input"]["frequencies"][:1]
        cfg["input"]["phases"] = cfg["input"]["phases"][:1]
        with self.assertRaises(ValidationError) as ctx:
            ExperimentService.load_config(cfg)
        self.assertIn("x0", ctx.exception.detail)
        self.assertIn("input", ctx.exception.detail)

    def test_step_must_divide_horizon(self):
        cfg = get_preset("scalar_example")
        cfg["step"] = 0.3
        with self.assertRaises(ValidationError):
            ExperimentService.load_config(cfg)

    def test_replay_needs_a_file(self):
        cfg = get_preset("scalar_example")
        cfg["noise"]["mode"] = "replay"
        with self.assertRaises(ValidationError):
            ExperimentService.load_config(cfg)

    def test_multi_output_measurement_noise_needs_gain(self):
        cfg = get_preset("batch_reactor")
        cfg["noise"]["delta_v"] = 1e-3
        with self.assertRaises(ValidationError):
            ExperimentService.load_config(cfg)

    def test_levels_must_increase(self):
        cfg = get_preset("batch_reactor")
        cfg["monte_carlo"]["delta_w_levels"] = [1e-2, 1e-3]
        with self.assertRaises(ValidationError):
            ExperimentService.load_config(cfg)


class PipelineTests(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.out = Path(self.tmp.name)

    def _noise_free_scalar(self):
        cfg = get_preset("scalar_example")
        cfg["noise"].update(delta_w=0.0, delta_v=0.0, gamma=None)
        return ExperimentService.load_config(cfg)

    def test_scalar_pipeline(self):
        cfg = ExperimentService.load_config("scalar_example")
        report = ExperimentService.run_pipeline(cfg, out=str(self.out))

        self.assertEqual(report["status"], FEASIBLE)
        self.assertLess(abs(report["Delta"][0, 0] - 7.1045e-4), 1e-7)
        self.assertTrue(report["gv_unit_bound"])
        spectrum = report["spectrum"]
        nearest = int(np.argmin(np.abs(spectrum + 2.0)))
        self.assertLess(abs(spectrum[nearest] + 2.0), 1e-6)
        others = np.delete(spectrum, nearest)
        self.assertEqual(others.size, 2)
        self.assertTrue(np.all(others.real < -1.0), others)
        self.assertLessEqual(report["spectral_abscissa"], -1.9)
        self.assertTrue(report["decays"])
        self.assertEqual(report["verification"]["theta_star_in_set"], 1)
        self.assertEqual(report["verification"]["theta_star_stabilized"], 1)
        for name in (
            "trajectory.csv", "noise.json", "noise_bound.csv",
            "moments.csv", "synthesis.csv", "verification.csv",
        ):
            self.assertTrue((self.out / name).exists(), name)

        study = Study.objects.get(pk=report["study_id"])
        self.assertEqual(study.kind, Study.KIND_PIPELINE)
        self.assertEqual(study.runs.get().status, FEASIBLE)

    def test_exported_moments_are_exact(self):
        cfg = self._noise_free_scalar()
        report = ExperimentService.run_pipeline(cfg, out=str(self.out), record=False)
        moments = report["outcome"].moments
        restored = CsvExporter.read_moments(self.out / "moments.csv")
        for label in ("Y", "X", "Z", "Delta"):
            np.testing.assert_array_equal(getattr(restored, label), getattr(moments, label))
        synthesis = CsvExporter.read_synthesis(self.out / "synthesis.csv")
        np.testing.assert_array_equal(synthesis.K, report["K"])

    def test_noise_free_estimate(self):
        report = ExperimentService.run_pipeline(self._noise_free_scalar(), out=str(self.out), record=False)
        self.assertEqual(report["status"], FEASIBLE)
        self.assertEqual(report["Delta"][0, 0], 0.0)
        self.assertLessEqual(report["verification"]["theta_hat_error"], 1e-4)
        self.assertIsNone(report["study_id"])
        self.assertEqual(Study.objects.count(), 0)

    def test_same_seed_same_artifacts(self):
        cfg = ExperimentService.load_config("scalar_example")
        first, second = self.out / "a", self.out / "b"
        ExperimentService.run_pipeline(cfg, seed=3, out=str(first), record=False)
        ExperimentService.run_pipeline(cfg, seed=3, out=str(second), record=False)
        for name in ("moments.csv", "noise.json", "synthesis.csv"):
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes())

    def test_noise_replay(self):
        cfg = ExperimentService.load_config("scalar_example")
        ExperimentService.run_pipeline(cfg, seed=5, out=str(self.out / "sampled"), record=False)
        cfg["noise"].update(mode="replay", replay_file=str(self.out / "sampled" / "noise.json"))
        ExperimentService.run_pipeline(cfg, seed=99, out=str(self.out / "replayed"), record=False)
        self.assertEqual(
            (self.out / "sampled" / "moments.csv").read_bytes(),
            (self.out / "replayed" / "moments.csv").read_bytes(),
        )

    def test_unexcited_data_fail_in_gain_stage(self):
        cfg = self._noise_free_scalar()
        cfg["input"] = {"kind": "zero", "channels": 1}
        with self.assertRaises(PipelineError) as ctx:
            ExperimentService.run_pipeline(cfg, out=str(self.out), record=False)
        self.assertEqual(ctx.exception.stage, STAGE_GAIN)

    def test_scalar_example(self):
        report = ExperimentService.run_scalar_example(out=str(self.out), grid_points=9)
        self.assertEqual(report["status"], FEASIBLE)
        self.assertEqual(report["grid_points"], 9 ** 3)
        self.assertEqual(report["inclusion_violations"], 0)
        rows = CsvExporter.read_rows(self.out / "cross_section.csv")
        self.assertEqual(len(rows), 9 ** 3)
        self.assertTrue(any(row["in_ellipsoid"] == "1" for row in rows))
        self.assertEqual(Study.objects.get().kind, Study.KIND_SCALAR)


class SummaryTests(TestCase):
    def test_level_summary(self):
        rows = [
            {"level": 0, "rho": 1.0, "status": FEASIBLE},
            {"level": 0, "rho": 3.0, "status": FEASIBLE},
            {"level": 1, "rho": 5.0, "status": "infeasible"},
            {"level": 1, "rho": float("nan"), "status": NUMERICAL_FAILURE},
        ]
        summary = summarize_levels(rows, [0.0, 1e-3])
        self.assertEqual([row["level"] for row in summary], [0, 1])
        self.assertEqual(summary[0]["rho_median"], 2.0)
        self.assertEqual(summary[0]["rho_q1"], 1.5)
        self.assertEqual(summary[0]["feasible_pct"], 100.0)
        self.assertEqual(summary[1]["rho_median"], 5.0)
        self.assertEqual(summary[1]["feasible_pct"], 0.0)
        self.assertEqual(summary[1]["failure_pct"], 50.0)
        self.assertEqual(set(summary[0]), set(SUMMARY_COLUMNS))

    def test_record_and_recompute(self):
        rows = [
            {"level": 0, "delta_w": 0.0, "run": 0, "seed": 10, "rho": 1.0, "lambda_min_z": 0.1,
             "status": FEASIBLE, "spectral_abscissa": -1.0, "decays": True, "wall_time": 0.5},
            {"level": 0, "delta_w": 0.0, "run": 1, "seed": 11, "rho": float("nan"),
             "lambda_min_z": float("nan"), "status": NUMERICAL_FAILURE,
             "spectral_abscissa": float("nan"), "decays": None, "wall_time": 0.1},
        ]
        study_id = ExperimentService.record_study({"name": "unit"}, Study.KIND_REACTOR, 10, Path("."), rows)
        study = Study.objects.get(pk=study_id)
        failed = study.runs.get(run_index=1)
        self.assertIsNone(failed.rho)
        self.assertIsNone(failed.spectral_abscissa)
        summary = ExperimentService.study_summary(study)
        self.assertEqual(len(summary), 1)
        self.assertEqual(summary[0]["rho_median"], 1.0)
        self.assertEqual(summary[0]["failure_pct"], 50.0)


class ReactorStudyTests(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.out = Path(self.tmp.name)

    def test_small_sweep(self):
        result = ExperimentService.run_batch_reactor_study(
            levels=[0.0, 1e-2], runs_per_level=2, base_seed=7, out=str(self.out)
        )
        rows = result["rows"]
        self.assertEqual([row["run"] for row in rows], [0, 1, 2, 3])
        self.assertEqual([row["seed"] for row in rows], [7, 8, 9, 10])
        self.assertEqual([row["level"] for row in rows], [0, 0, 1, 1])
        self.assertTrue(all(row["status"] == FEASIBLE for row in rows[:2]))
        self.assertEqual(result["summary"][0]["feasible_pct"], 100.0)
        for row in rows:
            if math.isfinite(row["rho"]) and row["lambda_min_z"] > 0:
                expected = (0.07685 ** 2 * row["delta_w"]) / row["lambda_min_z"]
                self.assertAlmostEqual(row["rho"], expected, delta=1e-9 * max(expected, 1.0))

        self.assertEqual(len(CsvExporter.read_rows(self.out / "runs.csv")), 4)
        summary_rows = CsvExporter.read_rows(self.out / "summary.csv")
        self.assertEqual(list(summary_rows[0]), SUMMARY_COLUMNS)
        self.assertEqual(RunRecord.objects.filter(study_id=result["study_id"]).count(), 4)

    def test_sweep_is_reproducible(self):
        kwargs = dict(levels=[1e-3], runs_per_level=2, base_seed=3, record=False)
        ExperimentService.run_batch_reactor_study(out=str(self.out / "a"), **kwargs)
        ExperimentService.run_batch_reactor_study(out=str(self.out / "b"), **kwargs)
        self.assertEqual(
            (self.out / "a" / "runs.csv").read_bytes(), (self.out / "b" / "runs.csv").read_bytes()
        )

    def test_empty_levels(self):
        with self.assertRaises(PipelineError):
            ExperimentService.run_batch_reactor_study(levels=[], runs_per_level=1, record=False, out=str(self.out))

    @tag("slow")
    def test_feasibility_trend(self):
        result = ExperimentService.run_batch_reactor_study(
            runs_per_level=50, base_seed=0, workers=4, out=str(self.out), record=False
        )
        feasible = [row["feasible_pct"] for row in result["summary"]]
        self.assertEqual(len(feasible), 5)
        self.assertEqual(result["levels"][0], 0.0)
        inversions = [b - a for a, b in zip(feasible, feasible[1:]) if b > a]
        self.assertLessEqual(len(inversions), 1)
        self.assertTrue(all(step <= 5.0 for step in inversions))
        self.assertGreaterEqual(feasible[0], 95.0)
        self.assertLessEqual(feasible[-1], 30.0)


class SetupTests(TestCase):
    def test_build_setup(self):
        setup = build_setup(ExperimentService.load_config("batch_reactor"))
        self.assertEqual(setup.plant.order, 4)
        self.assertEqual(setup.filter.mu, 8)
        self.assertEqual(setup.input.channels, 2)
        self.assertEqual(setup.horizon, 3.0)

    def test_rank_tolerance_comes_from_settings(self):
        cfg = ExperimentService.load_config("batch_reactor")
        stabilization = {**settings.STABILIZATION, "RANK_RTOL": 0.999}
        with override_settings(STABILIZATION=stabilization):
            with self.assertRaises(PipelineError) as ctx:
                build_setup(cfg)
        self.assertEqual(ctx.exception.stage, STAGE_INITIALIZATION)
        self.assertIn("not controllable", str(ctx.exception))
