from pathlib import Path

import numpy as np
from django.core.management.base import BaseCommand, CommandError
from rest_framework.exceptions import ValidationError

from ...exceptions import StabilizationError
from ...services import ExperimentService


class ExperimentCommand(BaseCommand):
    """
    Base class of the experiment commands.

    Subclasses implement run(); validation and numerical failures are
    reported as CommandError so the process exits non-zero.
    """

    config_required = True

    def add_arguments(self, parser):
        parser.add_argument(
            "--config",
            required=self.config_required,
            help="Experiment config: JSON file or preset name (scalar_example, batch_reactor)",
        )
        parser.add_argument("--seed", type=int, default=None, help="Noise seed (defaults to noise.seed)")
        parser.add_argument("--out", default=None, help="Output directory")
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        try:
            self.run(**options)
        except ValidationError as e:
            raise CommandError(f"Invalid config: {e.detail}")
        except StabilizationError as e:
            raise CommandError(str(e))
        except FileNotFoundError as e:
            raise CommandError(f"File not found: {e.filename}")

    def run(self, **options):
        raise NotImplementedError

    def load_config(self, source):
        return ExperimentService.load_config(source)

    def report(self, label: str, value) -> None:
        if isinstance(value, np.ndarray):
            value = np.array2string(value, precision=6)
        elif isinstance(value, float):
            value = f"{value:.6g}"
        self.stdout.write(f"  {label}: {value}")

    def written(self, *paths: Path) -> None:
        for path in paths:
            self.stdout.write(self.style.SUCCESS(f"Wrote {path}"))
