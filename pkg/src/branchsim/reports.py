"""Pass/fail records shared by the verification routines and the CLI."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

PASS, FAIL = "pass", "fail"


@dataclass
class TestReport:
    """One checked statistic: passes iff ``|statistic - reference| <= tolerance``.

    ``std_error`` is NaN when it does not apply (deterministic checks, R = 1).
    """

    __test__ = False  # keep pytest from collecting this class

    name: str
    statistic: float
    reference: float
    tolerance: float
    std_error: float = math.nan
    note: str = ""
    informational: bool = False
    verdict: str = field(init=False)

    def __post_init__(self):
        ok = abs(self.statistic - self.reference) <= self.tolerance
        self.verdict = PASS if ok else FAIL

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def line(self) -> str:
        se = "n/a" if math.isnan(self.std_error) else f"{self.std_error:.4g}"
        tag = " (informational)" if self.informational else ""
        return (f"{self.verdict.upper():4s} {self.name}: stat={self.statistic:.6g} "
                f"ref={self.reference:.6g} tol={self.tolerance:.4g} se={se}{tag}"
                + (f"  [{self.note}]" if self.note else ""))


REPORT_FIELDS = ["name", "statistic", "reference", "tolerance", "std_error", "verdict",
                 "informational", "note"]


def write_reports(path, reports, header_comment: str | None = None):
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in reports:
            row = asdict(r)
            for key in ("statistic", "reference", "tolerance", "std_error"):
                row[key] = repr(float(row[key]))
            w.writerow({k: row[k] for k in REPORT_FIELDS})
    return path


def aggregate(reports) -> bool:
    """True when every non-informational report passed."""
    return all(r.passed for r in reports if not r.informational)
