"""Markdown and CSV rendering of sweep results."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from .experiment import CellResult

DAGGER_TEXT = {"conjugate": "conjugate transpose", "transpose": "plain transpose"}
OVERLAP_TEXT = {"min": "min (one fine element layer)", "coarse": "coarse (one coarse element layer)"}


@dataclass(frozen=True)
class TableLayout:
    """Rows are the swept value (f or k), columns the subdomain count; one block per
    (n_ppwl, overlap, method, nu) combination."""

    title: str = "Iteration counts"
    show_coarse_dim: bool = False


@dataclass(frozen=True)
class RenderedTable:
    markdown: str
    csv: str


def _fmt(v):
    return "" if v is None else f"{v:g}" if isinstance(v, float) else str(v)


def _ordered_unique(seq):
    return list(dict.fromkeys(seq))


def render_table(rows: list[CellResult], layout: TableLayout | None = None) -> RenderedTable:
    layout = layout or TableLayout()
    if not rows:
        return RenderedTable(f"# {layout.title}\n\n(no cells)\n", "")
    tols = sorted({r.tol for r in rows})
    daggers = sorted({r.dagger for r in rows})
    overlaps = _ordered_unique(r.key["overlap"] for r in rows)
    lines = [
        f"# {layout.title}",
        "",
        f"Relative residual tolerance {', '.join(f'{t:g}' for t in tols)}; "
        f"coarse adjoint: {', '.join(DAGGER_TEXT.get(d, d) for d in daggers)}; "
        f"overlap: {', '.join(OVERLAP_TEXT.get(o, o) for o in overlaps)}. "
        "`a(b)`: outer iterations with average inner coarse iterations; "
        "`×`: iteration cap reached; `−`: did not run.",
        "",
    ]
    blocks = _ordered_unique(
        (r.key["n_ppwl"], r.key["overlap"], r.key["method"], r.key.get("nu")) for r in rows
    )
    for p, ov, method, nu in blocks:
        sel = [r for r in rows if (r.key["n_ppwl"], r.key["overlap"], r.key["method"], r.key.get("nu")) == (p, ov, method, nu)]
        axis = sel[0].key["axis"]
        values = _ordered_unique(r.key["value"] for r in sel)
        Ns = _ordered_unique(r.key["N"] for r in sel)
        head = f"## {method}, {ov} overlap, n_ppwl = {_fmt(p)}"
        if nu is not None:
            head += f", ν = {nu}"
        lines += [head, "", "| " + axis + " | " + " | ".join(f"N={N}" for N in Ns) + " |"]
        lines.append("|" + "---|" * (len(Ns) + 1))
        lookup = {(r.key["value"], r.key["N"]): r for r in sel}
        for v in values:
            cells = []
            for N in Ns:
                r = lookup.get((v, N))
                entry = "−" if r is None else r.entry
                if layout.show_coarse_dim and r is not None and r.coarse_dim is not None and r.status == "converged":
                    entry += f" [{r.coarse_dim}]"
                cells.append(entry)
            lines.append(f"| {_fmt(v)} | " + " | ".join(cells) + " |")
        lines.append("")

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "overlap", "n_ppwl", "axis", "value", "N", "nu", "entry", "status",
                "iterations", "inner_avg", "coarse_dim", "tol", "dagger", "message"])
    for r in rows:
        k = r.key
        w.writerow([
            k["method"], k["overlap"], _fmt(k["n_ppwl"]), k["axis"], _fmt(k["value"]), k["N"], _fmt(k.get("nu")),
            r.entry, r.status, _fmt(r.iterations),
            "" if r.inner_avg is None else f"{r.inner_avg:.2f}",
            _fmt(r.coarse_dim), f"{r.tol:g}", r.dagger, r.message,
        ])
    return RenderedTable("\n".join(lines), buf.getvalue())
