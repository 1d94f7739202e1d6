from pathlib import Path

from ...data_moments import accumulate_moments, build_consistency_set, excitation_check
from ...services import ExperimentService, build_setup
from ...signals_sim import simulate_open_loop
from ...utils import CsvExporter
from ._common import ExperimentCommand


class Command(ExperimentCommand):
    help = "Simulate, filter and accumulate the data moments Y, X, Z together with Delta"

    def add_command_arguments(self, parser):
        parser.add_argument("--noise", default=None, help="Replay the noise.json written by simulate")

    def run(self, **options):
        cfg = self.load_config(options["config"])
        setup = build_setup(cfg)
        truth = ExperimentService.ground_truth(setup)
        _, Delta, _ = ExperimentService.noise_certificate(setup, truth)

        seed = options["seed"] if options["seed"] is not None else int(setup.noise.get("seed", 0))
        if options["noise"]:
            w_spec, v_spec = CsvExporter.read_noise(Path(options["noise"]))
        else:
            w_spec, v_spec = ExperimentService.noise_realization(setup, seed)

        traj, fdata = simulate_open_loop(
            setup.plant, setup.filter, setup.input, w_spec, v_spec,
            x0=setup.x0, h=setup.step, T=setup.horizon,
        )
        moments = accumulate_moments(traj, fdata, Delta)
        exciting, lam_min = excitation_check(moments)

        self.stdout.write(f"Data moments for '{setup.name}'")
        self.report("lambda_min(Z)", lam_min)
        if exciting:
            self.report("rho", build_consistency_set(moments).rho)
        else:
            self.stdout.write(self.style.WARNING("  data are not interval exciting"))

        output_dir = CsvExporter.get_output_dir(options["out"])
        self.written(CsvExporter.write_moments(output_dir / "moments.csv", moments))
