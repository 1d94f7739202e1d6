import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import django
import numpy as np
from django.conf import settings
from django.db import transaction
from scipy import linalg

from .data_moments import (
    ConsistencySet,
    DataMoments,
    accumulate_moments,
    build_consistency_set,
    ellipsoid_membership,
    excitation_check,
)
from .exceptions import PipelineError, StabilizationError
from .lmi_synthesis import (
    FEASIBLE,
    NUMERICAL_FAILURE,
    SynthesisResult,
    assemble_lmi,
    closed_loop_spectrum,
    solve_lmi,
    stability_set_membership,
)
from .models import RunRecord, Study
from .noise_bounds import (
    GainCertificate,
    NoisePrior,
    certify_gamma,
    check_gv_norm_one,
    compute_delta,
    gamma_search,
)
from .plant_model import (
    FilterDesign,
    GroundTruth,
    PlantCoefficients,
    StateSpacePlant,
    build_state_space,
    closed_loop_matrix,
    compute_ground_truth,
    controller_realization,
    design_filter,
)
from .presets import get_preset
from .serializers import ExperimentConfigSerializer
from .signals_sim import (
    FilteredData,
    SignalSpec,
    Trajectory,
    sample_l2_ball,
    simulate_closed_loop,
    simulate_open_loop,
)
from .utils import CsvExporter

logger = logging.getLogger(__name__)

STAGE_INITIALIZATION = "initialization"
STAGE_FILTERING = "filtering"
STAGE_GAIN = "gain_computation"
STAGE_DEPLOYMENT = "deployment"

DEPLOY_HORIZON_FACTOR = 5.0
DEPLOY_MAX_STEPS = 50_000
DEPLOY_MIN_STEPS = 1000
LEVEL_SPAN = (-1.0, 0.5)
CALIBRATION_BISECTIONS = 24


@dataclass(frozen=True, eq=False)
class ExperimentSetup:
    """Everything the pipeline needs that does not depend on the noise draw."""

    name: str
    coefficients: PlantCoefficients
    plant: StateSpacePlant
    filter: FilterDesign
    input: SignalSpec
    x0: np.ndarray
    horizon: float
    step: float
    noise: Dict
    synthesis: Dict


@dataclass(eq=False)
class RunOutcome:
    status: str
    rho: Optional[float] = None
    lambda_min_z: Optional[float] = None
    spectral_abscissa: Optional[float] = None
    decays: Optional[bool] = None
    wall_time: float = 0.0
    trajectory: Optional[Trajectory] = None
    filtered: Optional[FilteredData] = None
    moments: Optional[DataMoments] = None
    consistency: Optional[ConsistencySet] = None
    synthesis: Optional[SynthesisResult] = None
    spectrum: Optional[np.ndarray] = None
    diagnostics: Dict = field(default_factory=dict)


def build_setup(cfg: Dict) -> ExperimentSetup:
    """
    Plant realization and filter design from a validated config.

    Raises:
        PipelineError: stage 'initialization'
    """
    plant_cfg = cfg["plant"]
    try:
        coefficients = PlantCoefficients(
            n=plant_cfg["n"],
            m=plant_cfg["m"],
            p=plant_cfg["p"],
            q=plant_cfg.get("q", 0),
            A_coeffs=tuple(plant_cfg["A"]),
            B_coeffs=tuple(plant_cfg["B"]),
            E_coeffs=tuple(plant_cfg.get("E") or ()),
        )
        rtol = settings.STABILIZATION["RANK_RTOL"]
        plant = build_state_space(coefficients, rtol=rtol)
        filt = design_filter(
            cfg["filter"]["Lambda"], cfg["filter"]["Gamma"],
            m=coefficients.m, p=coefficients.p, rtol=rtol,
        )
        u_spec = SignalSpec.from_dict(cfg["input"])
    except StabilizationError as e:
        raise PipelineError(STAGE_INITIALIZATION, str(e)) from e

    return ExperimentSetup(
        name=cfg["name"],
        coefficients=coefficients,
        plant=plant,
        filter=filt,
        input=u_spec,
        x0=np.asarray(cfg.get("x0") or np.zeros(plant.order), dtype=float),
        horizon=float(cfg["horizon"]),
        step=float(cfg.get("step") or 1e-4),
        noise=dict(cfg.get("noise") or {}),
        synthesis=dict(cfg.get("synthesis") or {}),
    )


def draw_noise(
    setup: ExperimentSetup,
    delta_w: float,
    delta_v: float,
    seed,
    on_sphere: Optional[bool] = None,
) -> Tuple[SignalSpec, SignalSpec]:
    """Fourier-ball draws for w then v from one generator."""
    noise = setup.noise
    rng = np.random.default_rng(seed)
    order = int(noise.get("fourier_order", 50))
    period = noise.get("period") or setup.horizon
    sphere = bool(noise.get("on_sphere", False)) if on_sphere is None else on_sphere
    plant = setup.plant
    w_spec = sample_l2_ball(plant.q, order, setup.horizon, delta_w, seed=rng, period=period, on_sphere=sphere)
    v_spec = sample_l2_ball(plant.p, order, setup.horizon, delta_v, seed=rng, period=period, on_sphere=sphere)
    return w_spec, v_spec


def deployment_check(
    plant: StateSpacePlant,
    filt: FilterDesign,
    K: np.ndarray,
    abscissa: float,
    seed=None,
) -> bool:
    """
    Noise-free closed loop from a random initial condition over
    5 / |spectral abscissa| seconds; True when the state norm has decayed.
    """
    if not abscissa < 0.0:
        return False
    horizon = DEPLOY_HORIZON_FACTOR / abs(abscissa)
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(plant.order)
    xc0 = rng.standard_normal(filt.mu)
    start = np.linalg.norm(np.concatenate([x0, xc0]))

    M = closed_loop_matrix(plant, filt, K)
    radius = float(np.abs(linalg.eigvals(M)).max())
    steps = max(DEPLOY_MIN_STEPS, math.ceil(horizon * radius / 0.1))
    if steps > DEPLOY_MAX_STEPS:
        logger.debug("deployment horizon needs %d steps, using the matrix exponential", steps)
        final = linalg.expm(M * horizon) @ np.concatenate([x0, xc0])
    else:
        traj = simulate_closed_loop(plant, filt, K, x0, xc0, h=horizon / steps, T=horizon)
        final = np.concatenate([traj.x[-1], traj.xc[-1]])
    return bool(np.linalg.norm(final) < start)


def execute_run(
    setup: ExperimentSetup,
    Delta: np.ndarray,
    w_spec: SignalSpec,
    v_spec: SignalSpec,
    truth: Optional[GroundTruth] = None,
    deploy_seed=None,
) -> RunOutcome:
    """
    Filtering, gain computation and deployment for one noise realization.

    Raises:
        PipelineError: labelled with the failing stage
    """
    started = time.perf_counter()
    plant, filt = setup.plant, setup.filter
    outcome = RunOutcome(status=NUMERICAL_FAILURE)

    try:
        traj, fdata = simulate_open_loop(
            plant, filt, setup.input, w_spec, v_spec, x0=setup.x0, h=setup.step, T=setup.horizon
        )
    except StabilizationError as e:
        raise PipelineError(STAGE_FILTERING, str(e)) from e
    outcome.trajectory, outcome.filtered = traj, fdata

    try:
        moments = accumulate_moments(traj, fdata, Delta)
        _, outcome.lambda_min_z = excitation_check(moments)
        outcome.moments = moments
        cs = build_consistency_set(moments)
        outcome.consistency, outcome.rho = cs, cs.rho
        prob = assemble_lmi(
            moments, filt, setup.synthesis.get("eps"), setup.synthesis.get("decay_rate", 0.0)
        )
        result = solve_lmi(
            prob,
            objective=setup.synthesis.get("objective", "feasibility"),
            solver=setup.synthesis.get("solver") or "CLARABEL",
        )
    except StabilizationError as e:
        raise PipelineError(STAGE_GAIN, str(e)) from e
    outcome.synthesis, outcome.status = result, result.status

    if result.feasible:
        try:
            spectrum = closed_loop_spectrum(plant, filt, result.K, truth)
            outcome.spectrum = spectrum
            outcome.spectral_abscissa = float(spectrum.real.max())
            outcome.decays = deployment_check(plant, filt, result.K, outcome.spectral_abscissa, deploy_seed)
        except StabilizationError as e:
            raise PipelineError(STAGE_DEPLOYMENT, str(e)) from e

    outcome.wall_time = time.perf_counter() - started
    return outcome


def _split_seed(seed: int) -> Tuple[np.random.SeedSequence, np.random.SeedSequence]:
    noise_seq, deploy_seq = np.random.SeedSequence(seed).spawn(2)
    return noise_seq, deploy_seq


def _study_worker(task: Dict) -> Dict:
    """One Monte-Carlo run; top level so process pools can pickle it."""
    setup = build_setup(task["config"])
    noise_seq, deploy_seq = _split_seed(task["seed"])
    row = {
        "level": task["level"],
        "delta_w": task["delta_w"],
        "run": task["run"],
        "seed": task["seed"],
        "rho": float("nan"),
        "lambda_min_z": float("nan"),
        "status": NUMERICAL_FAILURE,
        "spectral_abscissa": float("nan"),
        "decays": None,
        "wall_time": 0.0,
    }
    started = time.perf_counter()
    try:
        w_spec, v_spec = draw_noise(
            setup, task["delta_w"], task["delta_v"], noise_seq, on_sphere=False
        )
        outcome = execute_run(setup, np.asarray(task["Delta"]), w_spec, v_spec, deploy_seed=deploy_seq)
    except PipelineError as e:
        logger.warning("run %d failed in stage %s: %s", task["run"], e.stage, e)
        row["wall_time"] = time.perf_counter() - started
        return row

    row.update(
        rho=outcome.rho if outcome.rho is not None else float("nan"),
        lambda_min_z=outcome.lambda_min_z if outcome.lambda_min_z is not None else float("nan"),
        status=outcome.status,
        decays=outcome.decays,
        wall_time=outcome.wall_time,
    )
    if outcome.spectral_abscissa is not None:
        row["spectral_abscissa"] = outcome.spectral_abscissa
    return row


def _level_summary(index: int, delta_w: float, level_rows: Sequence[Dict]) -> Dict:
    rhos = np.array([row["rho"] for row in level_rows], dtype=float)
    rhos = rhos[np.isfinite(rhos)]
    q1, median, q3 = np.percentile(rhos, [25, 50, 75]) if rhos.size else (np.nan,) * 3
    total = max(len(level_rows), 1)
    feasible = sum(row["status"] == FEASIBLE for row in level_rows)
    failures = sum(row["status"] == NUMERICAL_FAILURE for row in level_rows)
    return {
        "level": index,
        "delta_w": float(delta_w),
        "rho_q1": float(q1),
        "rho_median": float(median),
        "rho_q3": float(q3),
        "feasible_pct": 100.0 * feasible / total,
        "failure_pct": 100.0 * failures / total,
    }


def summarize_levels(rows: Sequence[Dict], levels: Sequence[float]) -> List[Dict]:
    """Per-level rho quartiles and feasibility / failure percentages."""
    return [
        _level_summary(index, delta_w, [row for row in rows if row["level"] == index])
        for index, delta_w in enumerate(levels)
    ]


class ExperimentService:
    """
    Orchestrates experiments: config loading, the full pipeline, the scalar
    example and the batch-reactor Monte-Carlo study.

    Numerical work is delegated to the pure modules; this class handles
    artifacts, persistence and stage labelling.
    """

    @staticmethod
    def load_config(source: Union[str, Path, Dict]) -> Dict:
        """
        Validate a config given as a JSON path, a preset name or a dict.

        Raises:
            rest_framework.exceptions.ValidationError: invalid config
        """
        if isinstance(source, dict):
            data = source
        elif str(source) in ("scalar_example", "batch_reactor"):
            data = get_preset(str(source))
        else:
            with open(source) as handle:
                data = json.load(handle)
        serializer = ExperimentConfigSerializer(data=data)
        serializer.is_valid(raise_exception=True)
        return json.loads(json.dumps(serializer.validated_data))

    @staticmethod
    def ground_truth(setup: ExperimentSetup) -> GroundTruth:
        try:
            return compute_ground_truth(setup.plant, setup.filter, setup.x0)
        except StabilizationError as e:
            raise PipelineError(STAGE_INITIALIZATION, str(e)) from e

    @staticmethod
    def noise_certificate(
        setup: ExperimentSetup,
        truth: GroundTruth,
    ) -> Tuple[GainCertificate, np.ndarray, Optional[bool]]:
        """
        Gain certificate for the process noise and the bound Delta.
        A configured gamma is checked instead of searched.
        """
        noise, plant = setup.noise, setup.plant
        try:
            if noise.get("gamma"):
                cert = certify_gamma(truth.LambdaTilde, plant.E, plant.C, noise["gamma"], setup.horizon)
            else:
                cert = gamma_search(truth.LambdaTilde, plant.E, plant.C, setup.horizon)

            applies = None
            if noise.get("delta_v", 0.0) > 0 and plant.p == 1 and noise.get("gv_gain") is None:
                applies, sup_val = check_gv_norm_one(setup.coefficients, setup.filter.Lambda)
                logger.info("||G_v|| sweep: %.8g (unit bound %s)", sup_val, "applies" if applies else "not certified")

            Delta = compute_delta(
                NoisePrior(noise.get("delta_w", 0.0), noise.get("delta_v", 0.0)),
                cert,
                plant.p,
                gv_gain=noise.get("gv_gain"),
                proposition_holds=applies,
            )
        except StabilizationError as e:
            raise PipelineError(STAGE_INITIALIZATION, str(e)) from e
        return cert, Delta, applies

    @staticmethod
    def noise_realization(setup: ExperimentSetup, seed: int) -> Tuple[SignalSpec, SignalSpec]:
        noise = setup.noise
        if noise.get("mode") == "replay":
            return CsvExporter.read_noise(Path(noise["replay_file"]))
        noise_seq, _ = _split_seed(seed)
        return draw_noise(setup, noise.get("delta_w", 0.0), noise.get("delta_v", 0.0), noise_seq)

    @classmethod
    def run_pipeline(
        cls,
        cfg: Dict,
        seed: Optional[int] = None,
        out: Optional[str] = None,
        record: bool = True,
        kind: str = Study.KIND_PIPELINE,
    ) -> Dict:
        """
        Initialization, filtering, gain computation and deployment in order,
        writing every intermediate artifact.

        Returns:
            Report dictionary; 'outcome' holds the full RunOutcome
        """
        # Step 1: initialization
        setup = build_setup(cfg)
        truth = cls.ground_truth(setup)
        cert, Delta, applies = cls.noise_certificate(setup, truth)
        seed = int(setup.noise.get("seed", 0)) if seed is None else int(seed)
        w_spec, v_spec = cls.noise_realization(setup, seed)

        # Steps 2-4: filtering, gain computation, deployment
        _, deploy_seq = _split_seed(seed)
        outcome = execute_run(setup, Delta, w_spec, v_spec, truth=truth, deploy_seed=deploy_seq)

        # Step 5: artifacts
        output_dir = CsvExporter.get_output_dir(out)
        CsvExporter.write_trajectory(output_dir / "trajectory.csv", outcome.trajectory, outcome.filtered)
        CsvExporter.write_noise(output_dir / "noise.json", w_spec, v_spec)
        CsvExporter.write_gamma_trace(output_dir / "noise_bound.csv", cert, Delta)
        CsvExporter.write_moments(output_dir / "moments.csv", outcome.moments)
        result = outcome.synthesis
        controller = controller_realization(setup.filter, result.K) if result.feasible else None
        CsvExporter.write_synthesis(output_dir / "synthesis.csv", result, controller)

        cs = outcome.consistency
        theta_member, theta_margin = ellipsoid_membership(cs, truth.Theta_star)
        verification = {
            "theta_star_in_set": int(theta_member),
            "theta_star_margin": theta_margin,
            "theta_hat_error": float(np.linalg.norm(cs.Theta_hat - truth.Theta_star, 2)),
            "rho": cs.rho,
        }
        sections = {}
        if result.feasible:
            stabilized, worst = stability_set_membership(result.P, result.K, truth.Theta_star, setup.filter)
            verification.update(
                theta_star_stabilized=int(stabilized),
                lyapunov_max_eig=worst,
                spectral_abscissa=outcome.spectral_abscissa,
                decays=int(bool(outcome.decays)),
            )
            sections["spectrum"] = np.column_stack([outcome.spectrum.real, outcome.spectrum.imag])
        CsvExporter.write_sections(output_dir / "verification.csv", sections, verification)

        study_id = None
        if record:
            study_id = cls.record_study(
                cfg, kind, seed, output_dir,
                [{
                    "level": 0,
                    "delta_w": setup.noise.get("delta_w", 0.0),
                    "run": 0,
                    "seed": seed,
                    "rho": outcome.rho,
                    "lambda_min_z": outcome.lambda_min_z,
                    "status": outcome.status,
                    "spectral_abscissa": outcome.spectral_abscissa,
                    "decays": outcome.decays,
                    "wall_time": outcome.wall_time,
                }],
            )

        logger.info("pipeline '%s' finished: %s (rho=%s)", setup.name, outcome.status, outcome.rho)
        return {
            "name": setup.name,
            "status": outcome.status,
            "seed": seed,
            "rho": outcome.rho,
            "gamma": cert.gamma,
            "gamma_inf": cert.gamma_inf,
            "Delta": Delta,
            "gv_unit_bound": applies,
            "K": result.K,
            "spectrum": outcome.spectrum,
            "spectral_abscissa": outcome.spectral_abscissa,
            "decays": outcome.decays,
            "verification": verification,
            "output_dir": str(output_dir),
            "study_id": study_id,
            "setup": setup,
            "truth": truth,
            "outcome": outcome,
        }

    @staticmethod
    def stability_grid(
        cs: ConsistencySet,
        result: SynthesisResult,
        filt: FilterDesign,
        points: int = 21,
        spread: float = 1.5,
    ) -> Tuple[List[Dict], int]:
        """
        Evaluate membership in the consistency set and in C(P, K) on a box
        around the least-squares estimate (single-output data only).

        Returns the rows and the number of points inside the set but not
        stabilized.
        """
        center = cs.Theta_hat.ravel()
        Z_inv = linalg.inv(cs.Z)
        semi_axes = np.sqrt(max(float(cs.S_N[0, 0]), 0.0) * np.clip(np.diag(Z_inv), 0.0, None))
        half_widths = spread * np.where(semi_axes > 0, semi_axes, 1.0)
        axes = [np.linspace(c - w, c + w, points) for c, w in zip(center, half_widths)]

        rows, violations = [], 0
        for values in np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, center.size):
            Theta = values.reshape(cs.Theta_hat.shape)
            inside, _ = ellipsoid_membership(cs, Theta)
            stabilized = False
            if result.feasible:
                stabilized, _ = stability_set_membership(result.P, result.K, Theta, filt)
            violations += int(inside and not stabilized)
            row = {f"theta_{i}": float(v) for i, v in enumerate(values)}
            row.update(in_ellipsoid=int(inside), in_stability_set=int(stabilized))
            rows.append(row)
        return rows, violations

    @classmethod
    def run_scalar_example(
        cls,
        seed: Optional[int] = None,
        out: Optional[str] = None,
        record: bool = True,
        grid_points: int = 21,
    ) -> Dict:
        """
        The scalar unstable plant with u = sin(5 pi t), noise on the energy
        spheres and a gridded cross-section of the parameter space.
        """
        cfg = cls.load_config("scalar_example")
        report = cls.run_pipeline(cfg, seed=seed, out=out, record=record, kind=Study.KIND_SCALAR)

        outcome = report["outcome"]
        rows, violations = cls.stability_grid(
            outcome.consistency, outcome.synthesis, report["setup"].filter, points=grid_points
        )
        columns = [f"theta_{i}" for i in range(outcome.consistency.Theta_hat.size)]
        columns += ["in_ellipsoid", "in_stability_set"]
        CsvExporter.write_rows(Path(report["output_dir"]) / "cross_section.csv", columns, rows)
        if violations:
            logger.warning("%d grid points lie in the consistency set but are not stabilized", violations)

        report.update(grid_points=len(rows), inclusion_violations=violations)
        return report

    @staticmethod
    def choose_levels(
        setup: ExperimentSetup,
        cert: GainCertificate,
        count: int = 5,
    ) -> List[float]:
        """
        Locate the critical delta_w on noise-free data by geometric bisection
        and place the levels around it, starting from zero.
        """
        plant, filt = setup.plant, setup.filter
        traj, fdata = simulate_open_loop(
            plant, filt, setup.input, None, None, x0=setup.x0, h=setup.step, T=setup.horizon
        )
        base = accumulate_moments(traj, fdata, np.zeros((plant.p, plant.p)))

        def feasible(delta_w: float) -> bool:
            Delta = compute_delta(NoisePrior(delta_w, 0.0), cert, plant.p)
            prob = assemble_lmi(
                base.with_delta(Delta), filt,
                setup.synthesis.get("eps"), setup.synthesis.get("decay_rate", 0.0),
            )
            result = solve_lmi(
                prob,
                objective=setup.synthesis.get("objective", "feasibility"),
                solver=setup.synthesis.get("solver") or "CLARABEL",
            )
            return result.feasible

        if not feasible(0.0):
            raise PipelineError(STAGE_GAIN, "noise-free data do not admit a stabilizing gain")

        lo, hi = 1e-12, 1.0
        while feasible(hi) and hi < 1e12:
            lo, hi = hi, hi * 100.0
        while not feasible(lo) and lo > 1e-24:
            hi, lo = lo, lo / 100.0
        for _ in range(CALIBRATION_BISECTIONS):
            mid = math.sqrt(lo * hi)
            if feasible(mid):
                lo = mid
            else:
                hi = mid
        critical = math.sqrt(lo * hi)
        logger.info("critical delta_w on noise-free data: %.4e", critical)

        if count <= 1:
            return [0.0]
        return [0.0] + [float(v) for v in critical * np.logspace(*LEVEL_SPAN, count - 1)]

    @classmethod
    def run_batch_reactor_study(
        cls,
        cfg: Optional[Dict] = None,
        levels: Optional[Sequence[float]] = None,
        runs_per_level: Optional[int] = None,
        base_seed: Optional[int] = None,
        workers: Optional[int] = None,
        out: Optional[str] = None,
        record: bool = True,
    ) -> Dict:
        """
        Monte-Carlo feasibility sweep over delta_w levels. Run i of the sweep
        uses seed base_seed + i; failures are recorded, never raised.
        """
        cfg = cfg or cls.load_config("batch_reactor")
        monte_carlo = cfg.get("monte_carlo") or {}
        runs_per_level = runs_per_level or monte_carlo.get("runs_per_level", 50)
        base_seed = monte_carlo.get("base_seed", 0) if base_seed is None else base_seed
        workers = workers or monte_carlo.get("workers") or settings.STABILIZATION["WORKERS"]

        setup = build_setup(cfg)
        truth = cls.ground_truth(setup)
        cert, _, _ = cls.noise_certificate(setup, truth)
        if levels is None:
            levels = monte_carlo.get("delta_w_levels") or cls.choose_levels(
                setup, cert, settings.STABILIZATION["LEVEL_COUNT"]
            )
        if not levels:
            raise PipelineError(STAGE_INITIALIZATION, "at least one delta_w level is required")

        delta_v = setup.noise.get("delta_v", 0.0)
        tasks = []
        for level, delta_w in enumerate(levels):
            Delta = compute_delta(
                NoisePrior(delta_w, delta_v), cert, setup.plant.p, gv_gain=setup.noise.get("gv_gain")
            )
            for k in range(runs_per_level):
                run = level * runs_per_level + k
                tasks.append({
                    "config": cfg,
                    "level": level,
                    "delta_w": float(delta_w),
                    "delta_v": float(delta_v),
                    "run": run,
                    "seed": int(base_seed) + run,
                    "Delta": Delta.tolist(),
                })

        logger.info("reactor study: %d levels x %d runs on %d workers", len(levels), runs_per_level, workers)
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers, initializer=django.setup) as executor:
                rows = list(executor.map(_study_worker, tasks))
        else:
            rows = [_study_worker(task) for task in tasks]
        rows.sort(key=lambda row: row["run"])

        summary = summarize_levels(rows, levels)
        output_dir = CsvExporter.get_output_dir(out)
        CsvExporter.write_runs(output_dir / "runs.csv", rows)
        CsvExporter.write_summary(output_dir / "summary.csv", summary)

        study_id = cls.record_study(cfg, Study.KIND_REACTOR, base_seed, output_dir, rows) if record else None
        return {
            "levels": [float(v) for v in levels],
            "gamma": cert.gamma,
            "rows": rows,
            "summary": summary,
            "output_dir": str(output_dir),
            "study_id": study_id,
        }

    @staticmethod
    @transaction.atomic
    def record_study(cfg: Dict, kind: str, base_seed: int, output_dir: Path, rows: Sequence[Dict]) -> int:
        """Persist a Study and its runs; returns the study id."""

        def _nullable(value):
            if value is None:
                return None
            value = float(value)
            return value if math.isfinite(value) else None

        study = Study.objects.create(
            name=cfg.get("name", kind),
            kind=kind,
            base_seed=int(base_seed),
            config=cfg,
            output_dir=str(output_dir),
        )
        RunRecord.objects.bulk_create([
            RunRecord(
                study=study,
                run_index=row["run"],
                level=row["level"],
                delta_w=row["delta_w"],
                seed=row["seed"],
                rho=_nullable(row["rho"]),
                lambda_min_z=_nullable(row["lambda_min_z"]),
                status=row["status"],
                spectral_abscissa=_nullable(row["spectral_abscissa"]),
                decays=row.get("decays"),
                wall_time=row.get("wall_time", 0.0),
            )
            for row in rows
        ])
        return study.id

    @staticmethod
    def study_summary(study: Study) -> List[Dict]:
        """Per-level summary recomputed from the stored runs."""
        rows_by_level: Dict[int, List[Dict]] = {}
        delta_by_level: Dict[int, float] = {}
        for run in study.runs.all():
            delta_by_level.setdefault(run.level, run.delta_w)
            rows_by_level.setdefault(run.level, []).append({
                "rho": run.rho if run.rho is not None else float("nan"),
                "status": run.status,
            })

        summary = []
        for level in sorted(rows_by_level):
            item = _level_summary(level, delta_by_level[level], rows_by_level[level])
            summary.append({
                key: (None if isinstance(value, float) and not math.isfinite(value) else value)
                for key, value in item.items()
            })
        return summary
