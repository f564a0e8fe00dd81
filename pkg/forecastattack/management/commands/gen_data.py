from ...experiment import generate_data
from ..base import PipelineCommand


class Command(PipelineCommand):
    help = "Generate the synthetic aggregate and nodal load series for a run."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--days", type=int, help="days of hourly data")
        parser.add_argument("--stations", type=int, help="number of weather stations")

    def config_overrides(self, options):
        overrides = super().config_overrides(options)
        overrides.update(days=options.get("days"), stations=options.get("stations"))
        return overrides

    def run(self, experiment, **options):
        paths = generate_data(experiment)
        return f"Wrote {len(paths)} data files to {experiment.path('data')}"
