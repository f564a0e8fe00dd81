from ...experiment import attack_sweep
from ..base import PipelineCommand


class Command(PipelineCommand):
    help = "Sweep attack budgets against the aggregate forecaster for every attacker and direction."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--epsilons", help="comma-separated budgets in degrees")

    def config_overrides(self, options):
        overrides = super().config_overrides(options)
        overrides["epsilons"] = options.get("epsilons")
        return overrides

    def run(self, experiment, **options):
        sweep = attack_sweep(experiment)
        worst = max(row["mape"] for row in sweep["rows"])
        return f"Swept {len(sweep['rows']) - 1} attack settings; clean MAPE {sweep['clean']['mape']:.2f}%, worst {worst:.2f}%"
