from ...services import ExperimentService, build_setup
from ...signals_sim import simulate_open_loop
from ...utils import CsvExporter
from ._common import ExperimentCommand


class Command(ExperimentCommand):
    help = "Simulate the open-loop experiment and write the trajectory and its noise realization"

    def run(self, **options):
        cfg = self.load_config(options["config"])
        setup = build_setup(cfg)
        seed = options["seed"] if options["seed"] is not None else int(setup.noise.get("seed", 0))
        w_spec, v_spec = ExperimentService.noise_realization(setup, seed)

        traj, fdata = simulate_open_loop(
            setup.plant, setup.filter, setup.input, w_spec, v_spec,
            x0=setup.x0, h=setup.step, T=setup.horizon,
        )

        output_dir = CsvExporter.get_output_dir(options["out"])
        self.stdout.write(f"Simulated '{setup.name}' over [0, {setup.horizon:g}] s with h = {setup.step:g}")
        self.report("seed", seed)
        self.report("||w||^2", w_spec.energy())
        self.report("||v||^2", v_spec.energy())
        self.written(
            CsvExporter.write_trajectory(output_dir / "trajectory.csv", traj, fdata),
            CsvExporter.write_noise(output_dir / "noise.json", w_spec, v_spec),
        )
