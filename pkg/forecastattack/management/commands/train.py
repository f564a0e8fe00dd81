from ...experiment import train_models
from ..base import PipelineCommand


class Command(PipelineCommand):
    help = "Train the aggregate and nodal forecasters and record their clean test errors."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--epochs", type=int, help="training epochs")

    def config_overrides(self, options):
        overrides = super().config_overrides(options)
        overrides["epochs"] = options.get("epochs")
        return overrides

    def run(self, experiment, **options):
        metrics = train_models(experiment)
        worst = max(m["mape"] for m in metrics.values())
        return f"Trained {len(metrics)} forecasters (worst test MAPE {worst:.2f}%)"
