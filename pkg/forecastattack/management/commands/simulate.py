import logging

from django.db import connection, transaction

from ...experiment import config_hash, simulate
from ...models import DayOutcome, ExperimentRun
from ..base import PipelineCommand

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = "Simulate test days with clean, best-first and random attacked forecasts."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--sweep", action="store_true", help="simulate every budget in 'epsilons'")
        parser.add_argument("--eval-days", type=int, dest="eval_days", help="number of test days")

    def config_overrides(self, options):
        overrides = super().config_overrides(options)
        overrides["eval_days"] = options.get("eval_days")
        return overrides

    def run(self, experiment, **options):
        epsilons = experiment.values["epsilons"] if options.get("sweep") else None
        report = simulate(experiment, epsilons)
        self.record(experiment, report)
        counts = ", ".join(
            f"{g['strategy']}@{g['epsilon']:g}: {g['shed_days']}/{g['days']}" for g in report["aggregates"]["groups"]
        )
        return f"Simulated {report['aggregates']['days']} days; shed days {counts}"

    def record(self, experiment, report):
        if ExperimentRun._meta.db_table not in connection.introspection.table_names():
            logger.info("Run ledger tables are missing; skipping the ledger entry")
            return None
        v = experiment.values
        with transaction.atomic():
            run = ExperimentRun.objects.create(
                seed=experiment.seed,
                config_hash=config_hash(v),
                case_name=report["provenance"]["case"],
                out_dir=str(experiment.out),
                attacker=v["attacker"],
                epsilon=v["attack_epsilon"],
                n_adv=v["n_adv"],
                days=report["aggregates"]["days"],
            )
            DayOutcome.objects.bulk_create(
                [
                    DayOutcome(
                        run=run,
                        day=row["day"],
                        strategy=row["strategy"],
                        shed_mwh=row["shed_mwh"],
                        shed_occurred=bool(row["shed_occurred"]),
                        total_cost=row["total_cost"],
                        cost_delta=row["cost_delta"],
                        queries_used=row["queries_used"],
                        nodes=",".join(str(n) for n in row["nodes"]),
                    )
                    for row in report["rows"]
                    if row["epsilon"] in (0.0, v["attack_epsilon"])
                ]
            )
        return run
