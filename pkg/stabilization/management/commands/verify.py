from pathlib import Path

import numpy as np

from ...data_moments import build_consistency_set, ellipsoid_membership, sample_ellipsoid_boundary
from ...lmi_synthesis import closed_loop_spectrum, verify_stabilization
from ...services import ExperimentService, build_setup
from ...utils import CsvExporter
from ._common import ExperimentCommand


class Command(ExperimentCommand):
    help = "Check a synthesized controller against the true plant and the consistency set"

    def add_command_arguments(self, parser):
        parser.add_argument("--synthesis", required=True, help="synthesis.csv written by synthesize")
        parser.add_argument("--moments", default=None, help="moments.csv; enables the consistency-set checks")
        parser.add_argument("--samples", type=int, default=1000, help="Parameters drawn from the consistency set")

    def run(self, **options):
        cfg = self.load_config(options["config"])
        setup = build_setup(cfg)
        truth = ExperimentService.ground_truth(setup)
        result = CsvExporter.read_synthesis(Path(options["synthesis"]))
        if not result.feasible:
            self.stdout.write(self.style.WARNING(f"Nothing to verify: synthesis status is {result.status}"))
            return

        stabilized, abscissa = verify_stabilization(result, truth.Theta_star, setup.filter)
        spectrum = closed_loop_spectrum(setup.plant, setup.filter, result.K, truth)
        meta = {
            "theta_star_stabilized": int(stabilized),
            "theta_star_abscissa": abscissa,
            "spectral_abscissa": float(spectrum.real.max()),
        }

        style = self.style.SUCCESS if stabilized else self.style.ERROR
        self.stdout.write(style(f"True parameters stabilized: {stabilized}"))
        self.report("closed-loop spectrum", spectrum)

        if options["moments"]:
            cs = build_consistency_set(CsvExporter.read_moments(Path(options["moments"])))
            member, margin = ellipsoid_membership(cs, truth.Theta_star)
            seed = options["seed"] if options["seed"] is not None else 0
            failures = sum(
                not verify_stabilization(result, Theta, setup.filter)[0]
                for Theta in sample_ellipsoid_boundary(cs, seed=seed, count=options["samples"])
            )
            meta.update(theta_star_in_set=int(member), theta_star_margin=margin, sample_failures=failures)
            self.report("true parameters in the consistency set", member)
            style = self.style.SUCCESS if failures == 0 else self.style.ERROR
            self.stdout.write(style(f"  {failures} of {options['samples']} boundary samples not stabilized"))

        output_dir = CsvExporter.get_output_dir(options["out"])
        sections = {"spectrum": np.column_stack([spectrum.real, spectrum.imag])}
        self.written(CsvExporter.write_sections(output_dir / "verification.csv", sections, meta))
