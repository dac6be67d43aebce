import math
from datetime import datetime
from pathlib import Path
from typing import List, Sequence

from fpdf import FPDF

from app.analysis.aggregation import EvalReport
from app.constants import DISPLAY_WINDOWS


def _fmt(value: float, digits: int) -> str:
    return "n/a" if math.isnan(value) else f"{value:.{digits}f}"


class PDFReport(FPDF):
    '''
    Evaluation report for one run: run details, a whole-image and an ROI table
    with the best method highlighted, then the comparison panels.
    '''

    def __init__(self, report: EvalReport):
        super().__init__(orientation="P", unit="mm", format="A4")
        self.report = report
        self.sections: List[str] = []
        self.set_auto_page_break(auto=True, margin=15)

    def header(self):
        self.set_font('Helvetica', 'B', 11)
        self.cell(self.epw / 2, 8, 'MAR evaluation', align='L')
        self.set_font('Helvetica', '', 9)
        self.cell(self.epw / 2, 8, f"run {self.report.name}", align='R', new_x="LMARGIN", new_y="NEXT")
        self.set_draw_color(90, 90, 90)
        self.line(self.l_margin, self.get_y(), self.l_margin + self.epw, self.get_y())
        self.ln(3)

    def footer(self):
        self.set_y(-12)
        self.set_font('Helvetica', 'I', 8)
        self.cell(0, 6, f"page {self.page_no()}", align='C')

    def section(self, title: str):
        '''
        Start a numbered section.

        Args:
            title (str): Section heading.
        '''
        self.sections.append(title)
        self.ln(2)
        self.set_font('Helvetica', 'B', 12)
        self.cell(0, 7, f"{len(self.sections)}. {title}", new_x="LMARGIN", new_y="NEXT")
        self.ln(1)

    def note(self, text: str):
        self.set_font('Helvetica', 'I', 8)
        self.multi_cell(0, 4, text)
        self.ln(1)

    def run_details(self):
        report = self.report
        details = (
            ("Generated", datetime.now().strftime('%Y-%m-%d %H:%M')),
            ("Cases", str(len({r.case_id for r in report.rows}))),
            ("Methods", ", ".join(report.methods())),
        )
        for key, value in details:
            self.set_font('Helvetica', 'B', 9)
            self.cell(25, 5, key)
            self.set_font('Helvetica', '', 9)
            self.cell(0, 5, value, new_x="LMARGIN", new_y="NEXT")

    def metric_table(self, columns, best_by: str):
        '''
        One row per method; the row with the lowest `best_by` value is shaded.

        Args:
            columns: (heading, summary attribute, digits) triples after the method column.
            best_by (str): Summary attribute that ranks the methods (lower is better).
        '''
        summaries = list(self.report.summary.values())
        finite = [s for s in summaries if not math.isnan(getattr(s, best_by))]
        best = min(finite, key=lambda s: getattr(s, best_by)).method if finite else None
        width = (self.epw - 45) / len(columns)
        self.set_font('Helvetica', 'B', 9)
        self.cell(35, 6, "Method", border="B")
        self.cell(10, 6, "n", border="B", align='R')
        for heading, _, _ in columns:
            self.cell(width, 6, heading, border="B", align='R')
        self.ln()
        self.set_font('Helvetica', '', 9)
        self.set_fill_color(225, 240, 225)
        for s in summaries:
            fill = s.method == best
            self.cell(35, 6, s.method, fill=fill)
            self.cell(10, 6, str(s.n), align='R', fill=fill)
            for _, attr, digits in columns:
                self.cell(width, 6, _fmt(getattr(s, attr), digits), align='R', fill=fill)
            self.ln()

    def render(self, panels: Sequence[Path]):
        self.add_page()
        self.run_details()

        self.section("Whole image")
        self.metric_table((("RMSE (HU)", "rmse_mean", 2), ("std", "rmse_std", 2),
                           ("SSIM", "ssim_mean", 4), ("std", "ssim_std", 4)), best_by="rmse_mean")
        self.note("Metal pixels are excluded. Shaded: lowest mean RMSE.")

        self.section("Region around the metal")
        self.metric_table((("ROI RMSE (HU)", "roi_rmse_mean", 2), ("ROI SSIM", "roi_ssim_mean", 4)),
                          best_by="roi_rmse_mean")
        self.note("Cases whose ROI is entirely metal are left out of the means.")

        if panels:
            self.section("Comparison panels")
            lo, hi = DISPLAY_WINDOWS["body"]
            dlo, dhi = DISPLAY_WINDOWS["difference"]
            self.note(f"Top row: images in [{lo:g}, {hi:g}] HU. Bottom row: difference to the reference "
                      f"in [{dlo:g}, {dhi:g}] HU.")
            for panel in panels:
                self.image(str(panel), w=self.epw)
                self.set_font('Helvetica', '', 8)
                self.cell(0, 4, Path(panel).stem, align='C', new_x="LMARGIN", new_y="NEXT")
                self.ln(2)


def generate_report_pdf(report: EvalReport, panels: Sequence[Path], path: Path) -> Path:
    '''
    Write the evaluation report as a PDF.

    Args:
        report (EvalReport): Aggregated metrics.
        panels (Sequence[Path]): Comparison PNGs to append.
        path (Path): Output file.
    Returns:
        Path
    '''
    pdf = PDFReport(report)
    pdf.render(panels)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pdf.output(str(path))
    return path
