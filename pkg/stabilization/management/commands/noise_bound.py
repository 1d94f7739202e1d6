from ...services import ExperimentService, build_setup
from ...utils import CsvExporter
from ._common import ExperimentCommand


class Command(ExperimentCommand):
    help = "Certify the finite-horizon gain gamma and compute the noise bound Delta"

    def add_command_arguments(self, parser):
        parser.add_argument("--gamma", type=float, default=None, help="Check this gamma instead of searching")

    def run(self, **options):
        cfg = self.load_config(options["config"])
        if options["gamma"] is not None:
            cfg["noise"]["gamma"] = options["gamma"]
        setup = build_setup(cfg)
        truth = ExperimentService.ground_truth(setup)
        cert, Delta, applies = ExperimentService.noise_certificate(setup, truth)

        self.stdout.write(f"Noise bound for '{setup.name}'")
        self.report("gamma_inf", cert.gamma_inf)
        self.report("gamma", cert.gamma)
        self.report("Delta", Delta)
        if not cert.dre_solved:
            self.stdout.write(self.style.WARNING("  the Riccati equation is not solvable at this gamma"))
        if applies is False:
            self.stdout.write(self.style.WARNING("  unit bound on the measurement-noise gain is not certified"))

        output_dir = CsvExporter.get_output_dir(options["out"])
        self.written(CsvExporter.write_gamma_trace(output_dir / "noise_bound.csv", cert, Delta))
