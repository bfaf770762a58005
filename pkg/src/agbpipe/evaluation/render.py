"""Report emission: JSON (field-for-field), CSV, and grouped-bar SVG panels.

The CSV keeps the `stratum,bin_lo,bin_hi,n,rmse` schema; stratum totals are
rows with empty bin bounds, and report metadata travels in leading `#`
comment lines so a report round-trips losslessly. The SVG is self-contained:
one panel per stratum ("all" first), one bar group per bin, one bar per
model, and an explicit "n=0" annotation where a bin is empty.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from ..errors import InvalidArgument, ParseError
from .metrics import BinSpec, BinStat, EvalReport, StratumStats

_PALETTE = ["#4878cf", "#e1812c", "#3a923a", "#9d54a8", "#b23a48", "#6f6f6f"]


def _num(x):
    return None if x is None or (isinstance(x, float) and math.isinf(x)) else x


def report_to_json(report: EvalReport) -> str:
    doc = {
        "kind": "agbpipe-report",
        "model_id": report.model_id,
        "dataset_id": report.dataset_id,
        "seed": report.seed,
        "config_hash": report.config_hash,
        "edges": list(report.edges),
        "strata": {
            name: {
                "n": s.n,
                "rmse": s.rmse,
                "bins": [{"lo": b.lo, "hi": _num(b.hi), "n": b.n, "rmse": b.rmse} for b in s.bins],
            }
            for name, s in report.strata.items()
        },
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def report_from_json(text: str) -> EvalReport:
    doc = json.loads(text)
    if doc.get("kind") != "agbpipe-report":
        raise ParseError("not an evaluation report")
    rep = EvalReport(
        model_id=doc["model_id"],
        dataset_id=doc["dataset_id"],
        seed=doc["seed"],
        config_hash=doc["config_hash"],
        edges=tuple(doc["edges"]),
    )
    for name, s in doc["strata"].items():
        bins = [BinStat(b["lo"], math.inf if b["hi"] is None else b["hi"], b["n"], b["rmse"]) for b in s["bins"]]
        rep.strata[name] = StratumStats(n=s["n"], rmse=s["rmse"], bins=bins)
    return rep


def report_to_csv(report: EvalReport) -> str:
    lines = [
        f"# model_id={report.model_id}",
        f"# dataset_id={report.dataset_id}",
        f"# seed={report.seed}",
        f"# config_hash={report.config_hash}",
        "# schema=stratum,bin_lo,bin_hi,n,rmse",
    ]
    lines.append("stratum,bin_lo,bin_hi,n,rmse")
    for name, s in report.strata.items():
        lines.append(f"{name},,,{s.n},{'' if s.rmse is None else repr(s.rmse)}")
        for b in s.bins:
            hi = "inf" if math.isinf(b.hi) else repr(b.hi)
            lines.append(f"{name},{b.lo!r},{hi},{b.n},{'' if b.rmse is None else repr(b.rmse)}")
    return "\n".join(lines) + "\n"


def report_from_csv(text: str) -> EvalReport:
    meta: dict[str, str] = {}
    rows = []
    for line in text.splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                meta[k.strip()] = v.strip()
            continue
        if line.strip():
            rows.append(line)
    reader = csv.reader(rows)
    header = next(reader)
    if header != ["stratum", "bin_lo", "bin_hi", "n", "rmse"]:
        raise ParseError(f"unexpected CSV header {header}")
    rep = EvalReport(
        model_id=meta.get("model_id", "model"),
        dataset_id=meta.get("dataset_id", "dataset"),
        seed=int(meta.get("seed", 0)),
        config_hash=meta.get("config_hash", ""),
        edges=(),
    )
    strata: dict[str, StratumStats] = {}
    edges: list[float] = []
    for stratum, lo, hi, n, rmse in reader:
        r = None if rmse == "" else float(rmse)
        if lo == "" and hi == "":
            strata[stratum] = StratumStats(n=int(n), rmse=r, bins=[])
            continue
        b = BinStat(float(lo), float(hi), int(n), r)
        strata[stratum].bins.append(b)
        if stratum == next(iter(strata)):
            edges.append(b.lo)
    rep.edges = tuple(edges)
    rep.strata = strata
    return rep


def write_report(prefix: str | Path, report: EvalReport) -> tuple[Path, Path]:
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    jpath = prefix.with_suffix(".json")
    cpath = prefix.with_suffix(".csv")
    jpath.write_text(report_to_json(report))
    cpath.write_text(report_to_csv(report))
    return jpath, cpath


# ---------------------------------------------------------------------------
# SVG bar chart
# ---------------------------------------------------------------------------


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_svg(reports: list[EvalReport], path: str | Path) -> None:
    """Figure with one panel per stratum and grouped per-bin bars per model."""
    if not reports:
        raise InvalidArgument("need at least one report to render")
    edges = reports[0].edges
    for r in reports[1:]:
        if r.edges != edges:
            raise InvalidArgument("reports use different bin edges")
    bins = BinSpec(edges)
    strata = ["all"] + sorted({k for r in reports for k in r.strata} - {"all"})

    pw, ph = 460, 260
    margin, gut = 54, 36
    cols = 2
    rows_n = (len(strata) + cols - 1) // cols
    width = cols * (pw + gut) + gut
    height = rows_n * (ph + gut + 30) + gut + 24

    ymax = 1.0
    for r in reports:
        for s in r.strata.values():
            for b in s.bins:
                if b.rmse is not None:
                    ymax = max(ymax, b.rmse)
    ymax *= 1.1

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    # legend
    lx = gut
    for mi, r in enumerate(reports):
        color = _PALETTE[mi % len(_PALETTE)]
        out.append(f'<rect x="{lx}" y="8" width="12" height="12" fill="{color}"/>')
        out.append(f'<text x="{lx + 16}" y="18">{_esc(r.model_id)}</text>')
        lx += 16 + 8 * len(r.model_id) + 24

    for pi, stratum in enumerate(strata):
        px = gut + (pi % cols) * (pw + gut)
        py = gut + 24 + (pi // cols) * (ph + gut + 30)
        out.append(f'<g class="panel" data-stratum="{_esc(stratum)}">')
        out.append(f'<text x="{px + pw / 2:.0f}" y="{py - 6}" text-anchor="middle" font-size="13">{_esc(stratum)}</text>')
        out.append(f'<line x1="{px + margin}" y1="{py + ph}" x2="{px + pw}" y2="{py + ph}" stroke="black"/>')
        out.append(f'<line x1="{px + margin}" y1="{py}" x2="{px + margin}" y2="{py + ph}" stroke="black"/>')
        out.append(f'<text x="{px + 10}" y="{py + ph / 2:.0f}" transform="rotate(-90 {px + 10} {py + ph / 2:.0f})" text-anchor="middle">RMSE (Mg/ha)</text>')
        for frac in (0.0, 0.5, 1.0):
            yv = ymax * frac
            yy = py + ph - ph * frac
            out.append(f'<text x="{px + margin - 4}" y="{yy + 4:.0f}" text-anchor="end" font-size="9">{yv:.0f}</text>')

        group_w = (pw - margin) / bins.n_bins
        bar_w = max(2.0, (group_w - 8) / max(len(reports), 1))
        for bi in range(bins.n_bins):
            gx = px + margin + bi * group_w
            out.append(
                f'<text x="{gx + group_w / 2:.0f}" y="{py + ph + 14}" text-anchor="middle" font-size="9">{bins.label(bi)}</text>'
            )
            for mi, r in enumerate(reports):
                stats = r.strata.get(stratum)
                color = _PALETTE[mi % len(_PALETTE)]
                bx = gx + 4 + mi * bar_w
                b = stats.bins[bi] if stats is not None else None
                if b is None or b.n == 0:
                    out.append(
                        f'<text class="empty" x="{bx + bar_w / 2:.1f}" y="{py + ph - 4:.0f}" '
                        f'text-anchor="middle" font-size="7" fill="{color}">n=0</text>'
                    )
                    continue
                h = ph * (b.rmse / ymax)
                out.append(
                    f'<rect class="bar" data-stratum="{_esc(stratum)}" data-bin="{bins.label(bi)}" '
                    f'data-model="{_esc(r.model_id)}" x="{bx:.1f}" y="{py + ph - h:.1f}" '
                    f'width="{bar_w:.1f}" height="{h:.1f}" fill="{color}"/>'
                )
        out.append("</g>")
    out.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out) + "\n")
