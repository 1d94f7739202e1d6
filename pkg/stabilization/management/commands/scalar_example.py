from ...services import ExperimentService
from ._common import ExperimentCommand


class Command(ExperimentCommand):
    help = "Scalar unstable plant with u = sin(5 pi t) and a cross-section of the consistency set"

    config_required = False

    def add_command_arguments(self, parser):
        parser.add_argument("--grid-points", type=int, default=21, help="Grid points per parameter axis")
        parser.add_argument("--no-record", action="store_true", help="Do not store the run in the database")

    def run(self, **options):
        report = ExperimentService.run_scalar_example(
            seed=options["seed"],
            out=options["out"],
            record=not options["no_record"],
            grid_points=options["grid_points"],
        )

        style = self.style.SUCCESS if report["status"] == "feasible" else self.style.WARNING
        self.stdout.write(style(f"Scalar example: {report['status']}"))
        self.report("Delta", report["Delta"])
        self.report("rho", report["rho"])
        if report["K"] is not None:
            self.report("K", report["K"])
            self.report("closed-loop spectrum", report["spectrum"])
        if report["inclusion_violations"]:
            self.stdout.write(self.style.ERROR(
                f"  {report['inclusion_violations']} grid points in the consistency set are not stabilized"
            ))
        self.stdout.write(f"Artifacts in {report['output_dir']}")
