"""Report container and its table / CSV / JSON renderings."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Any


def angle_out(x: float) -> float:
    """Radians echoed to 12 significant digits."""
    return float(f"{x:.12g}")


@dataclass
class Report:
    metadata: dict[str, Any]
    columns: tuple[str, ...]
    rows: list[dict[str, Any]] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)

    def add(self, **row: Any) -> None:
        extra = set(row) - set(self.columns)
        if extra:
            raise KeyError(f"unknown report columns: {sorted(extra)}")
        self.rows.append({c: row.get(c) for c in self.columns})

    def to_dict(self) -> dict[str, Any]:
        return {"metadata": self.metadata, "rows": self.rows, "summary": self.summary}

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return to_json(self.to_dict())
        if fmt == "csv":
            return self.to_csv()
        if fmt == "table":
            return self.to_table()
        raise ValueError(f"unknown output format {fmt!r}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_cell(row[c]) for c in self.columns])
        return buf.getvalue()

    def to_table(self) -> str:
        cells = [list(self.columns)] + [[_cell(r[c]) for c in self.columns] for r in self.rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(self.columns))]
        lines = [f"# {k}: {_cell(v)}" for k, v in self.metadata.items()]
        for row in cells:
            lines.append("  ".join(v.rjust(w) for v, w in zip(row, widths)).rstrip())
        lines.extend(f"{k}: {_cell(v)}" for k, v in self.summary.items())
        return "\n".join(lines) + "\n"


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return " ".join(_cell(x) for x in v)
    return str(v)


def to_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"
