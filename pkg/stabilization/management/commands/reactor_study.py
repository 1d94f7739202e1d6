from django.core.management.base import CommandError

from ...services import ExperimentService
from ._common import ExperimentCommand


class Command(ExperimentCommand):
    help = "Monte-Carlo feasibility sweep on the batch reactor over increasing delta_w levels"

    config_required = False

    def add_command_arguments(self, parser):
        parser.add_argument("--levels", type=float, nargs="+", default=None, help="delta_w levels, increasing")
        parser.add_argument("--runs", type=int, default=None, help="Runs per level")
        parser.add_argument("--workers", type=int, default=None, help="Worker processes")
        parser.add_argument("--no-record", action="store_true", help="Do not store the study in the database")

    def run(self, **options):
        levels = options["levels"]
        if levels is not None and sorted(levels) != levels:
            raise CommandError("--levels must be listed in increasing order")
        cfg = self.load_config(options["config"] or "batch_reactor")
        result = ExperimentService.run_batch_reactor_study(
            cfg,
            levels=levels,
            runs_per_level=options["runs"],
            base_seed=options["seed"],
            workers=options["workers"],
            out=options["out"],
            record=not options["no_record"],
        )

        self.stdout.write(f"gamma = {result['gamma']:.6g}")
        self.stdout.write(f"{'level':>5} {'delta_w':>12} {'rho median':>12} {'feasible %':>10} {'failure %':>9}")
        for row in result["summary"]:
            self.stdout.write(
                f"{row['level']:>5} {row['delta_w']:>12.4e} {row['rho_median']:>12.4e} "
                f"{row['feasible_pct']:>10.1f} {row['failure_pct']:>9.1f}"
            )
        if result["study_id"] is not None:
            self.report("study", result["study_id"])
        self.stdout.write(self.style.SUCCESS(f"Artifacts in {result['output_dir']}"))
