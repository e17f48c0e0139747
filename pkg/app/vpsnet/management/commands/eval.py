from ...evaluation import evaluate_dirs, report_table
from ..base import VpsCommand


class Command(VpsCommand):
    help = "Score predicted probability maps against ground-truth masks."

    def add_arguments(self, parser):
        parser.add_argument("--pred", required=True, help="prediction root: <pred>/<clip>/NNNN.png")
        parser.add_argument("--gt", required=True, help="clip directory or folder of clip directories with masks/")
        parser.add_argument("--json", help="write the report as JSON")
        parser.add_argument("--pdf", help="write a PDF report")
        parser.add_argument("--samples", nargs="*", default=(), help="images (e.g. overlays) to include in the PDF")
        parser.add_argument("--jobs", type=int, default=1)

    def run(self, **options):
        report = evaluate_dirs(
            options["pred"],
            options["gt"],
            jobs=options["jobs"],
            json_path=options["json"],
            pdf_path=options["pdf"],
            sample_images=options["samples"],
        )
        self.stdout.write(report_table(report))
