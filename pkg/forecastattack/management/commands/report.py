from pathlib import Path

from ...reporting import audit, write_report
from ..base import PipelineCommand


class Command(PipelineCommand):
    help = "Render the text summary and SVG figures of a run directory."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--audit", action="store_true", help="also recompute the run report aggregates")

    def run(self, experiment, **options):
        out = Path(experiment.out)
        written = write_report(out)
        message = f"Rendered {len(written)} files in {out}"
        if options.get("audit") and (out / "run_report.json").exists():
            problems = audit(out)
            for problem in problems:
                self.stderr.write(problem)
            message += f"; audit found {len(problems)} discrepancies"
        return message
