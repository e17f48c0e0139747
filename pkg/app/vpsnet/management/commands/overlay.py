from ...imaging import export_overlays
from ..base import VpsCommand


class Command(VpsCommand):
    help = "Draw predicted mask contours over the input frames."

    def add_arguments(self, parser):
        parser.add_argument("--pred", required=True, help="folder of predicted NNNN.png maps for one clip")
        parser.add_argument("--frames", required=True, help="folder of the matching input frames")
        parser.add_argument("--out", required=True)

    def run(self, **options):
        count = export_overlays(options["pred"], options["frames"], options["out"])
        self.stdout.write(self.style.SUCCESS(f"{count} overlays written to {options['out']}"))
