"""Recompute a run report's aggregates from its stored rows and per-day records.

    python scripts/audit_run.py runs/default
"""
import os
import sys
from pathlib import Path


def run(*args):
    from forecastattack.reporting import audit

    out = Path(args[0] if args else "runs/default")
    problems = audit(out)
    for problem in problems:
        print(problem)
    print(f"{out}: {len(problems)} discrepancies")
    return 1 if problems else 0


if __name__ == "__main__":
    sys.path.insert(0, str(Path(__file__).resolve().parent.parent))
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "gridsite.settings")
    import django

    django.setup()
    sys.exit(run(*sys.argv[1:]))
