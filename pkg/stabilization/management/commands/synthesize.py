from pathlib import Path

from ...lmi_synthesis import OBJECTIVES, assemble_lmi, solve_lmi
from ...plant_model import controller_realization
from ...services import build_setup
from ...utils import CsvExporter
from ._common import ExperimentCommand


class Command(ExperimentCommand):
    help = "Solve the data-based LMI for a moments file and recover the controller gain K"

    def add_command_arguments(self, parser):
        parser.add_argument("--moments", required=True, help="moments.csv written by the moments command")
        parser.add_argument("--eps", type=float, default=None, help="Strictness margin (default from data scale)")
        parser.add_argument("--objective", choices=OBJECTIVES, default=None)

    def run(self, **options):
        cfg = self.load_config(options["config"])
        setup = build_setup(cfg)
        moments = CsvExporter.read_moments(Path(options["moments"]))

        eps = options["eps"] if options["eps"] is not None else setup.synthesis.get("eps")
        prob = assemble_lmi(moments, setup.filter, eps, setup.synthesis.get("decay_rate", 0.0))
        result = solve_lmi(
            prob,
            objective=options["objective"] or setup.synthesis.get("objective", "feasibility"),
            solver=setup.synthesis.get("solver") or "CLARABEL",
        )

        style = self.style.SUCCESS if result.feasible else self.style.WARNING
        self.stdout.write(style(f"LMI status: {result.status}"))
        self.report("eps", result.eps)
        if result.feasible:
            self.report("K", result.K)
            self.report("lmi margin", result.lmi_margin)
            self.report("cond(P)", result.condition_number)

        controller = controller_realization(setup.filter, result.K) if result.feasible else None
        output_dir = CsvExporter.get_output_dir(options["out"])
        self.written(CsvExporter.write_synthesis(output_dir / "synthesis.csv", result, controller))
