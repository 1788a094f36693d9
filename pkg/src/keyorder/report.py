"""Matplotlib rendering of key-class graphs.

Layout is deterministic: classes are layered by their longest dependency
chain (depended-upon classes at the top), ordered alphabetically within
a layer.  Secrecy edges are drawn solid, authenticity edges dashed.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Tuple

from .deps import KeyClassDag, transitive_reduction


def _layout(dag: KeyClassDag) -> Dict[str, Tuple[float, float]]:
    succ = dag.successors()
    level: Dict[str, int] = {}

    def chain(u: str) -> int:
        if u not in level:
            level[u] = 0
            level[u] = max((1 + chain(v) for v in succ[u]), default=0)
        return level[u]

    for c in dag.classes:
        chain(c.label)
    layers: Dict[int, list] = {}
    for lab, lv in level.items():
        layers.setdefault(lv, []).append(lab)
    pos = {}
    for lv, labs in layers.items():
        labs.sort()
        for i, lab in enumerate(labs):
            pos[lab] = (i - (len(labs) - 1) / 2.0, lv)
    return pos


def render_figure(dag: KeyClassDag, out_path: str) -> Path:
    """Write the reduced dependency graph as a figure (format by suffix)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import FancyArrowPatch

    reduced = transitive_reduction(dag)
    pos = _layout(reduced)
    n_layers = max((y for _x, y in pos.values()), default=0) + 1
    width = max((abs(x) for x, _y in pos.values()), default=1) * 2 + 2

    fig, ax = plt.subplots(figsize=(max(4.0, width * 1.4), max(3.0, n_layers * 1.1)))
    for e in sorted(reduced.edges, key=lambda e: (e.source, e.target)):
        x0, y0 = pos[e.source]
        x1, y1 = pos[e.target]
        for kind in sorted(e.kinds):
            style = "-" if kind == "secrecy" else "--"
            ax.add_patch(
                FancyArrowPatch(
                    (x0, y0), (x1, y1),
                    arrowstyle="-|>",
                    mutation_scale=12,
                    linestyle=style,
                    color="black",
                    shrinkA=16,
                    shrinkB=16,
                )
            )
    for lab, (x, y) in sorted(pos.items()):
        ax.text(
            x, y, lab,
            ha="center", va="center", fontsize=10,
            bbox=dict(boxstyle="round,pad=0.35", fc="#e8eef7", ec="#33507a"),
        )
    ax.set_xlim(min(x for x, _ in pos.values()) - 1, max(x for x, _ in pos.values()) + 1)
    ax.set_ylim(-0.7, n_layers - 0.3)
    ax.invert_yaxis()  # depended-upon keys at the top
    ax.axis("off")
    ax.set_title("key dependency classes (solid: secrecy, dashed: authenticity)", fontsize=9)
    fig.tight_layout()
    out = Path(out_path)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def edges_csv(dag: KeyClassDag) -> str:
    """Delimited edge listing of the reduced graph."""
    import csv
    import io

    reduced = transitive_reduction(dag)
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["source", "target", "kind"])
    for e in sorted(reduced.edges, key=lambda e: (e.source, e.target)):
        for kind in sorted(e.kinds):
            w.writerow([e.source, e.target, kind])
    return buf.getvalue()
