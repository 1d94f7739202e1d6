from ...services import ExperimentService
from ._common import ExperimentCommand


class Command(ExperimentCommand):
    help = "Run initialization, filtering, gain computation and deployment for one config"

    def add_command_arguments(self, parser):
        parser.add_argument("--no-record", action="store_true", help="Do not store the run in the database")

    def run(self, **options):
        cfg = self.load_config(options["config"])
        report = ExperimentService.run_pipeline(
            cfg, seed=options["seed"], out=options["out"], record=not options["no_record"]
        )

        style = self.style.SUCCESS if report["status"] == "feasible" else self.style.WARNING
        self.stdout.write(style(f"'{report['name']}': {report['status']}"))
        self.report("gamma", report["gamma"])
        self.report("rho", report["rho"])
        if report["K"] is not None:
            self.report("K", report["K"])
            self.report("spectral abscissa", report["spectral_abscissa"])
            self.report("state decays", report["decays"])
        if report["study_id"] is not None:
            self.report("study", report["study_id"])
        self.stdout.write(f"Artifacts in {report['output_dir']}")
