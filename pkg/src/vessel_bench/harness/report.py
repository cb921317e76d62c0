"""Experiment reports: raw-run CSV, averaged accuracy table, adaptation deltas."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

from ..errors import InvalidArgumentError
from .evaluation import ADAPTED, BASELINE, KINDS, REAL_ONLY, SYNTH_ONLY, RunRecord

CSV_FIELDS = ("kind", "method", "split", "shuffle_index", "accuracy", "confusion")
SPLIT_HEADER = "Data Split % (Training / Test)"
DELTA_HEADER = "Accuracy Increase"
ADAPTATION_NOTE = "classical-analog adaptation"
FORMATS = ("csv", "md")


def _exact(value) -> Fraction:
    # repr gives the shortest decimal that round-trips, so 0.96875 stays 0.96875
    return value if isinstance(value, Fraction) else Fraction(repr(float(value)))


def format_fixed(value, digits: int = 4) -> str:
    """Decimal string with round-half-up (away from zero) at ``digits`` places."""
    x = _exact(value)
    scale = 10**digits
    q = math.floor(abs(x) * scale + Fraction(1, 2))
    sign = "-" if x < 0 and q else ""
    whole, frac = divmod(q, scale)
    return f"{sign}{whole}.{frac:0{digits}d}" if digits else f"{sign}{whole}"


def format_accuracy(value) -> str:
    return format_fixed(value, 4)


def format_delta(value) -> str:
    """Accuracy difference as a percentage with two decimals, e.g. 0.0634 -> '6.34%'."""
    return format_fixed(_exact(value) * 100, 2) + "%"


def _split_key(label: str):
    train, _, _ = label.partition("/")
    try:
        return -float(train)
    except ValueError:
        return 0.0


@dataclass
class ExperimentReport:
    """Per-run records plus derived averages and adaptation deltas.

    Methods and splits keep first-seen order; averages are exact means of the
    per-shuffle accuracies.
    """

    records: list = field(default_factory=list)

    def __post_init__(self):
        self.records = list(self.records)

    def __eq__(self, other):
        return isinstance(other, ExperimentReport) and self.records == other.records

    def add(self, records) -> None:
        self.records.extend(records)

    def _ordered(self, attr, kind=None):
        seen = []
        for r in self.records:
            if kind is not None and r.kind != kind:
                continue
            v = getattr(r, attr)
            if v not in seen:
                seen.append(v)
        return seen

    @property
    def methods(self) -> list:
        return self._ordered("method")

    @property
    def splits(self) -> list:
        return self._ordered("split")

    def runs(self, kind: str, method: str, split: str) -> list:
        return [r for r in self.records if (r.kind, r.method, r.split) == (kind, method, split)]

    def mean_exact(self, kind: str, method: str, split: str) -> Fraction | None:
        runs = self.runs(kind, method, split)
        if not runs:
            return None
        return sum((_exact(r.accuracy) for r in runs), Fraction(0)) / len(runs)

    def mean(self, kind: str, method: str, split: str) -> float | None:
        runs = self.runs(kind, method, split)
        if not runs:
            return None
        return math.fsum(r.accuracy for r in runs) / len(runs)

    def averaged(self) -> dict:
        """{(kind, method, split): mean accuracy} for every populated cell."""
        out = {}
        for kind in KINDS:
            for m in self._ordered("method", kind):
                for s in self._ordered("split", kind):
                    v = self.mean(kind, m, s)
                    if v is not None:
                        out[(kind, m, s)] = v
        return out

    def delta_exact(self, method: str, split: str) -> Fraction | None:
        a = self.mean_exact(ADAPTED, method, split)
        b = self.mean_exact(REAL_ONLY, method, split)
        return None if a is None or b is None else a - b

    def deltas(self) -> dict:
        """{method: {split: adapted mean - real-only mean}} for adapted methods."""
        out = {}
        for m in self._ordered("method", ADAPTED):
            row = {}
            for s in self._ordered("split", ADAPTED):
                d = self.delta_exact(m, s)
                if d is not None:
                    row[s] = float(d)
            out[m] = row
        return out

    def columns(self) -> list:
        """(kind, method, heading) for the averaged table, benchmark baselines first."""
        cols = []
        for kind, suffix in ((BASELINE, ""), (REAL_ONLY, " (real-only)"), (SYNTH_ONLY, " (synth-only)"),
                             (ADAPTED, " (synth + real)")):
            for m in self._ordered("method", kind):
                cols.append((kind, m, m + suffix))
        return cols


def _markdown_table(header, rows) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines)


def accuracy_table(report: ExperimentReport) -> str:
    """Rows = splits (most training data first), columns = methods."""
    cols = report.columns()
    splits = sorted(report.splits, key=_split_key)
    rows = []
    for s in splits:
        cells = []
        for kind, m, _ in cols:
            v = report.mean_exact(kind, m, s)
            cells.append("" if v is None else format_accuracy(v))
        rows.append([s] + cells)
    return _markdown_table([SPLIT_HEADER] + [c[2] for c in cols], rows)


def delta_table(report: ExperimentReport, method: str) -> str:
    """Two columns: split, adapted minus real-only accuracy in percent."""
    rows = []
    for s in sorted(report._ordered("split", ADAPTED), key=_split_key):
        d = report.delta_exact(method, s)
        if d is not None:
            rows.append([s, format_delta(d)])
    return _markdown_table([SPLIT_HEADER, DELTA_HEADER], rows)


def runs_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in report.records:
        conf = ";".join(" ".join(str(v) for v in row) for row in r.confusion)
        w.writerow([r.kind, r.method, r.split, r.shuffle_index, repr(float(r.accuracy)), conf])
    return buf.getvalue()


def parse_runs_csv(text: str) -> ExperimentReport:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != CSV_FIELDS:
        raise InvalidArgumentError(f"runs CSV header must be {','.join(CSV_FIELDS)}")
    records = []
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(CSV_FIELDS):
            raise InvalidArgumentError(f"runs CSV line {line}: expected {len(CSV_FIELDS)} fields")
        kind, method, split, idx, acc, conf = row
        try:
            confusion = tuple(tuple(int(v) for v in part.split()) for part in conf.split(";"))
            records.append(RunRecord(kind, method, split, int(idx), float(acc), confusion))
        except ValueError as exc:
            raise InvalidArgumentError(f"runs CSV line {line}: {exc}") from None
    return ExperimentReport(records)


def markdown_report(report: ExperimentReport, title: str = "Vessel classification benchmark") -> str:
    parts = [f"# {title}", ""]
    shuffles = sorted({r.shuffle_index for r in report.records})
    parts += [f"## Average accuracy over {len(shuffles)} shuffles", "", accuracy_table(report), ""]
    for m in report._ordered("method", ADAPTED):
        parts += [f"## Impact of synthetic pretraining: {m} ({ADAPTATION_NOTE})", "", delta_table(report, m), ""]
    return "\n".join(parts)


def render_report(report: ExperimentReport, format: str = "md") -> str:
    """``csv``: one line per run; ``md``: averaged table plus one delta table per adapted method."""
    if format not in FORMATS:
        raise InvalidArgumentError(f"unknown report format {format!r}; expected one of {FORMATS}")
    if not report.records:
        raise InvalidArgumentError("cannot render an empty report")
    if format == "csv":
        return runs_csv(report)
    return markdown_report(report)
