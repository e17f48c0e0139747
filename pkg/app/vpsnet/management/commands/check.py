import json
from pathlib import Path

from django.conf import settings
from django.core.management.base import CommandError

from ...checks import SUITES, run_checks
from ...runconfig import write_json
from ..base import VpsCommand


class Command(VpsCommand):
    help = "Run the property and oracle suites; exits 1 if any suite fails."

    def add_arguments(self, parser):
        parser.add_argument("--suite", action="append", choices=list(SUITES), help="run only this suite (repeatable)")
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--out", help="report path (default: <VPS_RUNS_DIR>/check_report.json)")

    def run(self, **options):
        report = run_checks(options["suite"], seed=options["seed"])
        out = Path(options["out"] or settings.VPS_RUNS_DIR / "check_report.json")
        write_json(out, report)
        for result in report["suites"]:
            status = self.style.SUCCESS("pass") if result["passed"] else self.style.ERROR("FAIL")
            self.stdout.write(f"{result['suite']:<18} {status}  {result['seconds']:.2f}s  {json.dumps(result['details'])}")
        if not report["passed"]:
            failed = [r["suite"] for r in report["suites"] if not r["passed"]]
            raise CommandError(f"failed suites: {', '.join(failed)} (see {out})", returncode=1)
