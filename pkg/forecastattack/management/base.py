"""Shared plumbing for the pipeline commands."""
import json
import sys
from pathlib import Path

from django.core.management.base import BaseCommand

from ..exceptions import ForecastAttackError
from ..experiment import Experiment, read_config

EXIT_DOMAIN_ERROR = 2


class PipelineCommand(BaseCommand):
    """Reads ``--config``/``--seed``/``--out`` into an Experiment and reports domain errors as JSON.

    Subclasses implement ``run(experiment, **options)`` and return a short
    status line.
    """

    def add_arguments(self, parser):
        parser.add_argument("--config", help="YAML experiment configuration document")
        parser.add_argument("--seed", type=int, help="master seed (overrides the config file)")
        parser.add_argument("--out", default="runs/default", help="run directory (default: runs/default)")

    def config_overrides(self, options):
        return {"seed": options.get("seed")}

    def handle(self, *args, **options):
        try:
            values = read_config(options.get("config"), **self.config_overrides(options))
            experiment = Experiment(values, Path(options["out"]))
            message = self.run(experiment, **options)
        except ForecastAttackError as exc:
            sys.stderr.write(json.dumps(exc.to_dict(), sort_keys=True, default=str) + "\n")
            sys.exit(EXIT_DOMAIN_ERROR)
        if message:
            self.stdout.write(self.style.SUCCESS(message))

    def run(self, experiment, **options):
        raise NotImplementedError
