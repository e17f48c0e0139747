import io
from pathlib import Path

from django.utils import timezone
from reportlab.lib.pagesizes import A4
from reportlab.lib.units import mm
from reportlab.lib.utils import ImageReader, simpleSplit
from reportlab.pdfgen import canvas

from .metrics import COLUMNS


def _format_datetime_for_pdf(value):
    if timezone.is_aware(value):
        value = timezone.localtime(value)
    return value.strftime("%Y-%m-%d %H:%M")


def build_eval_report_pdf(report, title="Evaluation report", sources=None, sample_images=()):
    """Render a DatasetReport (overall and per-clip rows) to PDF bytes.

    ``sources`` is a mapping of label -> value shown in the header block;
    ``sample_images`` are PNG paths (e.g. overlays) drawn after the tables.
    """
    buf = io.BytesIO()
    c = canvas.Canvas(buf, pagesize=A4)
    width, height = A4
    margin_x = 18 * mm
    content_width = width - (2 * margin_x)
    line_height = 5 * mm
    y = height - 22 * mm
    label_width = 36 * mm
    first_col = 46 * mm
    col_width = (content_width - first_col) / len(COLUMNS)

    def ensure_space(required_height):
        nonlocal y
        if y - required_height < 20 * mm:
            c.showPage()
            y = height - 22 * mm

    def draw_section_title(text):
        nonlocal y
        ensure_space(8 * mm)
        c.setFont("Helvetica-Bold", 12)
        c.drawString(margin_x, y, text)
        y -= 3 * mm
        c.setLineWidth(0.5)
        c.line(margin_x, y, width - margin_x, y)
        y -= 5 * mm

    def draw_label_value(label, value):
        nonlocal y
        value_text = "-" if value is None or value == "" else str(value)
        lines = simpleSplit(value_text, "Helvetica", 10, content_width - label_width) or [""]
        ensure_space(len(lines) * line_height)
        c.setFont("Helvetica-Bold", 10)
        c.drawString(margin_x, y, f"{label}:")
        c.setFont("Helvetica", 10)
        for line in lines:
            c.drawString(margin_x + label_width, y, line)
            y -= line_height
        y -= 1.5 * mm

    def draw_row(label, cells, bold=False):
        nonlocal y
        ensure_space(line_height)
        c.setFont("Helvetica-Bold" if bold else "Helvetica", 9)
        c.drawString(margin_x, y, str(label)[:28])
        for i, cell in enumerate(cells):
            c.drawRightString(margin_x + first_col + (i + 1) * col_width, y, cell)
        y -= line_height

    def draw_metric_rows(rows):
        draw_row("", list(COLUMNS.values()), bold=True)
        for label, rep in rows:
            draw_row(label, [f"{getattr(rep, key):.4f}" for key in COLUMNS])

    c.setFont("Helvetica-Bold", 16)
    c.drawString(margin_x, y, title)
    y -= 8 * mm

    draw_section_title("Run")
    for label, value in (sources or {}).items():
        draw_label_value(label, value)
    draw_label_value("Clips", len(report.clips))
    draw_label_value("Frames", report.frames)
    draw_label_value("Generated", _format_datetime_for_pdf(timezone.now()))

    draw_section_title("Dataset")
    draw_metric_rows([("overall", report.overall)])

    draw_section_title("Per clip")
    draw_metric_rows(report.clips.items())

    images = [Path(p) for p in sample_images]
    if images:
        draw_section_title("Samples")
        size = 55 * mm
        for path in images:
            ensure_space(size + line_height)
            y -= size
            c.drawImage(ImageReader(str(path)), margin_x, y, width=size, height=size)
            c.setFont("Helvetica", 8)
            c.drawString(margin_x + size + 4 * mm, y, f"{path.parent.name}/{path.name}")
            y -= line_height

    c.showPage()
    c.save()
    return buf.getvalue()
