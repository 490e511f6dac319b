"""Rendering of result JSON into delimited tables and figures.

Every renderer writes a TSV next to a PNG so reports are both greppable and
viewable; figures are deterministic (fixed size, no timestamps).
"""

from __future__ import annotations

from pathlib import Path

from .errors import InputError

_FLOAT_FMT = "{:.4f}"


def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, float):
        return _FLOAT_FMT.format(value)
    return str(value)


def write_tsv(path: str | Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(cell) for cell in row) + "\n")


def _new_axes(width: float, height: float):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(width, height), dpi=120)
    return plt, fig, ax


def _save(plt, fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": "qeme"})
    plt.close(fig)


def render_probe_report(rows: list[dict], tsv_path: str | Path, png_path: str | Path) -> None:
    """Bar chart of probe accuracy per feature with std whiskers and baseline ticks."""
    if not rows:
        raise InputError("no probe rows to render")
    header = ["feature", "mean", "std", "baseline", "n_train", "n_test"]
    write_tsv(tsv_path, header, [[row.get(k) for k in header] for row in rows])

    plt, fig, ax = _new_axes(max(4.0, 1.2 * len(rows) + 2.0), 3.6)
    xs = range(len(rows))
    means = [row["mean"] for row in rows]
    stds = [row.get("std", 0.0) for row in rows]
    ax.bar(xs, means, yerr=stds, color="#4878a8", capsize=3, label="probe accuracy")
    for x, row in zip(xs, rows):
        baseline = row.get("baseline")
        if baseline is not None:
            ax.hlines(baseline, x - 0.4, x + 0.4, colors="#333333", linestyles="--", linewidth=1.2)
    ax.hlines([], [], [], colors="#333333", linestyles="--", label="majority baseline")
    ax.set_xticks(list(xs))
    ax.set_xticklabels([row["feature"] for row in rows], rotation=20, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("accuracy")
    ax.legend(loc="lower right", fontsize=8)
    _save(plt, fig, png_path)


def render_ablation_report(rows: list[dict], tsv_path: str | Path, png_path: str | Path) -> None:
    """One row per model: real tau plus the delta under each shuffled modality."""
    if not rows:
        raise InputError("no ablation rows to render")
    modalities = []
    for row in rows:
        for mod in row.get("deltas", {}):
            if mod not in modalities:
                modalities.append(mod)
    header = ["model", "tau_real"] + [f"delta_{m}" for m in modalities]
    table = [[row["model"], row["tau_real"]] + [row.get("deltas", {}).get(m) for m in modalities] for row in rows]
    write_tsv(tsv_path, header, table)

    plt, fig, ax = _new_axes(max(4.0, 1.6 * len(rows) + 2.0), 3.6)
    width = 0.8 / max(1, len(modalities))
    colors = ["#b24a3c", "#caa04a", "#4878a8", "#5a9a68"]
    for k, mod in enumerate(modalities):
        xs = [i + (k - (len(modalities) - 1) / 2) * width for i in range(len(rows))]
        deltas = [row.get("deltas", {}).get(mod) or 0.0 for row in rows]
        ax.bar(xs, deltas, width=width, color=colors[k % len(colors)], label=f"shuffle {mod}")
    ax.axhline(0.0, color="#333333", linewidth=0.8)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels([row["model"] for row in rows], rotation=15, ha="right")
    ax.set_ylabel("delta segment tau (shuffled - real)")
    ax.legend(fontsize=8)
    _save(plt, fig, png_path)


def render_evaluation_report(report: dict, tsv_path: str | Path, png_path: str | Path) -> None:
    """Flatten an evaluation report into metric/value rows and a bar summary."""
    rows: list[list] = []
    bars: list[tuple[str, float]] = []
    if "segment_tau" in report:
        res = report["segment_tau"]
        rows.append(["segment_tau", res["value"], f"groups_used={res['n_groups_used']}", f"groups_skipped={res['n_groups_skipped']}"])
        if res["value"] is not None:
            bars.append(("segment tau", res["value"]))
    if "spa" in report:
        res = report["spa"]
        rows.append(["spa", res["value"], f"pairs={len(res['pair_table'])}", ""])
        bars.append(("spa", res["value"]))
    if "contrastive_pa" in report:
        res = report["contrastive_pa"]
        rows.append(["contrastive_pa", res["value"], f"ties={res['n_ties']}/{res['n_pairs']}", f"excl_ties={_fmt(res['value_excl_ties'])}"])
        bars.append(("pa", res["value"]))
        for name, sub in sorted(report.get("contrastive_pa_by_phenomenon", {}).items()):
            rows.append([f"pa[{name}]", sub["value"], f"ties={sub['n_ties']}/{sub['n_pairs']}", f"excl_ties={_fmt(sub['value_excl_ties'])}"])
    if not rows:
        raise InputError("evaluation report holds no renderable results")
    write_tsv(tsv_path, ["metric", "value", "detail_1", "detail_2"], rows)

    plt, fig, ax = _new_axes(max(3.2, 1.4 * len(bars) + 1.6), 3.2)
    ax.bar(range(len(bars)), [b[1] for b in bars], color="#4878a8", width=0.5)
    ax.set_xticks(range(len(bars)))
    ax.set_xticklabels([b[0] for b in bars])
    ax.set_ylabel("value")
    ax.axhline(0.0, color="#333333", linewidth=0.8)
    _save(plt, fig, png_path)
