"""Human-readable passport pages: one self-contained HTML file, or Markdown."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from html import escape

from .errors import ConfigError
from .passport import ModelPassport, check_self_consistent
from .pipeline.dag import Dag

FORMATS = ("html", "markdown")
SHORT = 12

NODE_W, NODE_H = 150, 36
COL_GAP, ROW_GAP, MARGIN = 70, 24, 16

CSS = """
body { font-family: -apple-system, "Segoe UI", Helvetica, Arial, sans-serif; margin: 2rem auto;
       max-width: 60rem; color: #1d2733; line-height: 1.45; padding: 0 1rem; }
h1 { font-size: 1.6rem; margin-bottom: .2rem; }
h2 { border-bottom: 2px solid #d6dde6; padding-bottom: .2rem; margin-top: 2rem; }
h3 { margin-bottom: .3rem; }
table { border-collapse: collapse; margin: .5rem 0 1rem; width: 100%; }
th, td { border: 1px solid #d6dde6; padding: .3rem .5rem; text-align: left; vertical-align: top; }
th { background: #f1f4f8; width: 14rem; }
code, .digest { font-family: SFMono-Regular, Consolas, monospace; font-size: .9em; }
.digest { background: #eef2f7; padding: 0 .25rem; border-radius: 3px; cursor: help; }
.muted { color: #66717f; }
.identity { font-size: 1.05rem; word-break: break-all; }
svg text { font-family: Helvetica, Arial, sans-serif; font-size: 13px; }
""".strip()


@dataclass(frozen=True)
class RenderOptions:
    format: str = "html"
    include_graph_svg: bool | None = None

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ConfigError(f"unknown report format {self.format!r} (use html or markdown)")

    @property
    def svg(self) -> bool:
        if self.include_graph_svg is None:
            return self.format == "html"
        return self.include_graph_svg


# -- DAG drawing ---------------------------------------------------------------


def dag_layout(dag: Dag) -> dict[str, tuple[int, int]]:
    """(x, y) of each node's top-left corner: one column per rank, rows in
    lexicographic order within a column."""
    ranks = dag.ranks()
    columns: dict[int, list[str]] = {}
    for name in sorted(ranks):
        columns.setdefault(ranks[name], []).append(name)
    pos = {}
    for rank, names in columns.items():
        for row, name in enumerate(names):
            pos[name] = (MARGIN + (rank - 1) * (NODE_W + COL_GAP), MARGIN + row * (NODE_H + ROW_GAP))
    return pos


def render_dag_svg(dag: Dag) -> str:
    pos = dag_layout(dag)
    width = max((x for x, _ in pos.values()), default=0) + NODE_W + MARGIN
    height = max((y for _, y in pos.values()), default=0) + NODE_H + MARGIN
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" role="img" aria-label="pipeline stages">',
        '<defs><marker id="arrow" viewBox="0 0 10 10" refX="10" refY="5" markerWidth="8" '
        'markerHeight="8" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="#5b6b7d"/></marker></defs>',
    ]
    for a, b in sorted(dag.edges):
        (ax, ay), (bx, by) = pos[a], pos[b]
        x1, y1 = ax + NODE_W, ay + NODE_H // 2
        x2, y2 = bx, by + NODE_H // 2
        mid = (x1 + x2) // 2
        out.append(
            f'<path class="edge" data-from="{escape(a)}" data-to="{escape(b)}" '
            f'd="M{x1},{y1} C{mid},{y1} {mid},{y2} {x2},{y2}" fill="none" stroke="#5b6b7d" '
            f'stroke-width="1.5" marker-end="url(#arrow)"/>'
        )
    for name in sorted(pos):
        x, y = pos[name]
        label = name if len(name) <= 20 else name[:19] + "\u2026"
        out.append(
            f'<g class="node" data-stage="{escape(name)}"><title>{escape(name)}</title>'
            f'<rect x="{x}" y="{y}" width="{NODE_W}" height="{NODE_H}" rx="6" fill="#e8f0fa" stroke="#35618f"/>'
            f'<text x="{x + NODE_W // 2}" y="{y + NODE_H // 2 + 4}" text-anchor="middle">{escape(label)}</text></g>'
        )
    out.append("</svg>")
    return "\n".join(out)


# -- shared helpers -------------------------------------------------------------------


def _duration(start: str, end: str) -> str:
    if not start or not end:
        return ""
    try:
        secs = (
            datetime.fromisoformat(end.replace("Z", "+00:00")) - datetime.fromisoformat(start.replace("Z", "+00:00"))
        ).total_seconds()
    except ValueError:
        return ""
    return f"{secs:.3f} s"


def _ext_text(values) -> str:
    return ", ".join(v.lexical for v in values)


def _digest_html(value: str) -> str:
    if len(value) <= SHORT:
        return f'<code class="digest">{escape(value)}</code>'
    return f'<code class="digest" title="{escape(value)}">{escape(value[:SHORT])}</code>'


def _sections(p: ModelPassport) -> list[tuple[str, list]]:
    """Report content as (heading, blocks); each block is ("kv", rows),
    ("table", header, rows), ("text", str) or ("svg", None). Cell values are
    plain strings, or ("digest", hex) to be shortened for display."""
    t = p.training
    m = p.manual
    sections: list[tuple[str, list]] = []

    sections.append((
        "Identity",
        [("kv", [
            ("Identity", ("full", p.identity)),
            ("Model", m.modelName or "(unnamed)"),
            ("Version", m.modelVersion),
            ("Workspace", p.workspace),
            ("Created", p.created_at),
            ("Tool version", p.tool_version),
            ("Format version", p.format_version),
        ])],
    ))

    ds_blocks: list = []
    if not p.datasets:
        ds_blocks.append(("text", "none recorded"))
    for d in sorted(p.datasets, key=lambda d: d.id):
        rows = [
            ("Title", d.title),
            ("Identifier", d.id),
            ("Version", d.version),
            ("Publisher", d.publisher + (f" ({d.publisher_kind})" if d.publisher_kind else "")),
            ("License", d.license),
        ]
        if d.description:
            rows.append(("Description", d.description))
        if d.keywords:
            rows.append(("Keywords", ", ".join(sorted(d.keywords))))
        for key, values in sorted(d.health_ext.items()):
            rows.append((key, _ext_text(values)))
        if d.source is not None:
            rows.append(("Harvested from", f"{d.source.url} at {d.source.retrieved_at}"))
        ds_blocks.append(("kv", rows))
    sections.append(("Datasets", ds_blocks))

    model_blocks: list = [("kv", [
        ("Learning task", m.learningTask),
        ("Learning approach", m.learningApproach),
        ("Algorithm", m.algorithmFamily),
        ("Framework", m.softwareFramework),
        ("Artifact", t.model_path),
        ("Artifact sha256", ("digest", t.model_artifact.sha256)),
        ("Artifact md5", ("digest", t.model_artifact.md5)),
        ("Artifact size", f"{t.model_artifact.size} bytes"),
    ])]
    if t.implementation is not None:
        model_blocks[0][1].append(("Implementation", f"{t.implementation_path}"))
        model_blocks[0][1].append(("Implementation sha256", ("digest", t.implementation.sha256)))
    model_blocks.append(("h3", "Hyperparameters"))
    if t.hyperparameters:
        model_blocks.append(("table", ("Parameter", "Value"),
                             [(k, v.lexical) for k, v in sorted(t.hyperparameters.items())]))
    else:
        model_blocks.append(("text", "none recorded"))
    model_blocks.append(("h3", "Evaluation"))
    if t.evaluations:
        rows = []
        for e in sorted(t.evaluations, key=lambda e: e.metric):
            if isinstance(e.dataset, dict):
                ds = (e.dataset.get("path", ""), ("digest", e.dataset.get("sha256", "")))
            else:
                ds = (e.dataset or "", None)
            rows.append((e.metric, e.value, ds[0], ds[1] or ""))
        model_blocks.append(("table", ("Metric", "Value", "Dataset", "Dataset sha256"), rows))
    else:
        model_blocks.append(("text", "none recorded"))
    if t.environment:
        model_blocks.append(("h3", "Environment"))
        model_blocks.append(("table", ("Package", "Version"), [list(e) for e in sorted(t.environment)]))
    sections.append(("Model", model_blocks))

    dag = p.dag
    pipe_blocks: list = [("text", "Stages in execution order: " + ", ".join(dag.order))]
    if dag.edges:
        pipe_blocks.append(("table", ("From", "To"), [list(e) for e in dag.edges]))
    pipe_blocks.append(("svg", dag))
    sections.append(("Pipeline", pipe_blocks))

    stage_blocks: list = []
    for name in dag.order:
        rec = p.lock.records[name]
        stage_blocks.append(("h3", name))
        rows = [
            ("Command", ("code", rec.command)),
            ("Status", rec.status),
            ("Exit code", str(rec.exit_code)),
            ("Fingerprint", ("digest", rec.fingerprint)),
            ("Started", rec.started_at),
            ("Duration", _duration(rec.started_at, rec.ended_at)),
        ]
        if rec.tool is not None:
            rows.append(("Tool", f"{rec.tool.name} {rec.tool.version}".strip()))
        for k, v in sorted(rec.params.items()):
            rows.append((f"param {k}", v.lexical))
        stage_blocks.append(("kv", rows))
        files = [("dep", path, ref) for path, ref in sorted(rec.deps.items())]
        files += [("out", path, ref) for path, ref in sorted(rec.outs.items())]
        if files:
            stage_blocks.append((
                "table",
                ("Role", "Path", "sha256", "md5", "Size"),
                [(role, path, ("digest", ref.sha256), ("digest", ref.md5), str(ref.size)) for role, path, ref in files],
            ))
    sections.append(("Stage details", stage_blocks))

    sections.append(("Manual metadata", [("kv", [(k, v) for k, v in m.to_json().items()])]))
    return sections


# -- HTML ------------------------------------------------------------------------------


def _cell_html(value) -> str:
    if isinstance(value, tuple):
        kind, text = value
        if kind == "digest":
            return _digest_html(text)
        if kind == "code":
            return f"<code>{escape(text)}</code>"
        if kind == "full":
            return f'<code class="identity">{escape(text)}</code>'
    if value in ("", None):
        return '<span class="muted">not set</span>'
    return escape(str(value))


def _render_html(p: ModelPassport, opts: RenderOptions) -> str:
    title = p.manual.modelName or p.workspace
    out = [
        "<!DOCTYPE html>",
        '<html lang="en">',
        "<head>",
        '<meta charset="utf-8">',
        f"<title>Model passport: {escape(title)}</title>",
        f"<style>\n{CSS}\n</style>",
        "</head>",
        "<body>",
        f"<h1>Model passport: {escape(title)}</h1>",
        f'<p class="muted">{escape(p.identity)}</p>',
    ]
    for heading, blocks in _sections(p):
        slug = heading.lower().replace(" ", "-")
        out.append(f'<section id="{slug}">')
        out.append(f"<h2>{escape(heading)}</h2>")
        for block in blocks:
            kind = block[0]
            if kind == "text":
                out.append(f"<p>{escape(block[1])}</p>")
            elif kind == "h3":
                out.append(f"<h3>{escape(block[1])}</h3>")
            elif kind == "kv":
                out.append("<table>")
                for k, v in block[1]:
                    out.append(f"<tr><th>{escape(k)}</th><td>{_cell_html(v)}</td></tr>")
                out.append("</table>")
            elif kind == "table":
                out.append("<table>")
                out.append("<tr>" + "".join(f"<th>{escape(h)}</th>" for h in block[1]) + "</tr>")
                for row in block[2]:
                    out.append("<tr>" + "".join(f"<td>{_cell_html(c)}</td>" for c in row) + "</tr>")
                out.append("</table>")
            elif kind == "svg" and opts.svg:
                out.append(f'<div class="dag">\n{render_dag_svg(block[1])}\n</div>')
        out.append("</section>")
    out += ["</body>", "</html>", ""]
    return "\n".join(out)


# -- Markdown -----------------------------------------------------------------------------


def _md_escape(text: str) -> str:
    return str(text).replace("\\", "\\\\").replace("|", "\\|").replace("\n", " ")


def _cell_md(value) -> str:
    if isinstance(value, tuple):
        kind, text = value
        return f"`{text}`" if text else ""
    return _md_escape(value) if value not in ("", None) else "_not set_"


def _render_markdown(p: ModelPassport, opts: RenderOptions) -> str:
    title = p.manual.modelName or p.workspace
    out = [f"# Model passport: {_md_escape(title)}", ""]
    for heading, blocks in _sections(p):
        out += [f"## {heading}", ""]
        for block in blocks:
            kind = block[0]
            if kind == "text":
                out += [_md_escape(block[1]), ""]
            elif kind == "h3":
                out += [f"### {_md_escape(block[1])}", ""]
            elif kind == "kv":
                out += ["| Field | Value |", "| --- | --- |"]
                out += [f"| {_md_escape(k)} | {_cell_md(v)} |" for k, v in block[1]]
                out.append("")
            elif kind == "table":
                out.append("| " + " | ".join(block[1]) + " |")
                out.append("|" + " --- |" * len(block[1]))
                out += ["| " + " | ".join(_cell_md(c) for c in row) + " |" for row in block[2]]
                out.append("")
            elif kind == "svg" and opts.svg:
                out += [render_dag_svg(block[1]), ""]
    return "\n".join(out).rstrip("\n") + "\n"


def render(passport: ModelPassport, options: RenderOptions | None = None) -> str:
    opts = options or RenderOptions()
    check_self_consistent(passport)
    if opts.format == "html":
        return _render_html(passport, opts)
    return _render_markdown(passport, opts)
