"""Figure generation from cfmimo sweep results.

Reads results.csv (the simulator's fixed schema), aggregates the final
iteration of every drop, and renders antenna-sweep line charts: one curve
per (combiner, precoder mode), Monte-Carlo rows as lines and closed-form
rows as open-circle markers laid over them.  No numbers are recomputed
here; the script aggregates and draws only.

Rendering is deterministic: same CSV in, byte-identical image out for a
fixed matplotlib version (fixed style, no timestamps, fixed SVG hash
salt).
"""

import csv
from dataclasses import dataclass

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

FIGURES = {
    "sum-se-vs-l": dict(axis="l", xlabel="antennas per AP L",
                        ylabel="sum SE [bit/s/Hz]", per_ue=False),
    "avg-se-vs-n": dict(axis="n", xlabel="antennas per UE N",
                        ylabel="average SE per UE [bit/s/Hz]", per_ue=True),
}
FORMATS = ("png", "svg")

REQUIRED_COLUMNS = (
    "drop_seed", "k_total", "l", "n", "combiner", "precoder_mode",
    "se_path", "iteration", "ue_id", "sum_se",
)

# agreement required between closed-form markers and Monte-Carlo lines
MARKER_LINE_REL_TOL = 0.02

_COLORS = {
    ("mr", "none"): "tab:blue",
    ("mr", "wmmse1"): "tab:orange",
    ("mr", "iwmmse"): "tab:green",
    ("lmmse", "none"): "tab:red",
    ("lmmse", "wmmse1"): "tab:purple",
    ("lmmse", "iwmmse"): "tab:brown",
}


@dataclass
class FigureSpec:
    input_csv: str
    figure: str
    output: str
    format: str = ""      # inferred from the output suffix when empty

    def __post_init__(self):
        if self.figure not in FIGURES:
            raise ValueError(
                f"unknown figure {self.figure!r}; choose from {sorted(FIGURES)}"
            )
        if not self.format:
            self.format = self.output.rsplit(".", 1)[-1].lower()
        if self.format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}, got {self.format!r}")


def load_results(path):
    """Rows of results.csv with typed fields; rejects missing columns."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise ValueError(f"results file lacks required columns: {missing}")
        rows = []
        for rec in reader:
            rows.append({
                "drop_seed": int(rec["drop_seed"]),
                "k_total": int(rec["k_total"]),
                "l": int(rec["l"]),
                "n": int(rec["n"]),
                "combiner": rec["combiner"],
                "precoder_mode": rec["precoder_mode"],
                "se_path": rec["se_path"],
                "iteration": int(rec["iteration"]),
                "ue_id": rec["ue_id"],
                "sum_se": float(rec["sum_se"]),
            })
    if not rows:
        raise ValueError(f"results file {path} holds no data rows")
    return rows


def aggregate(rows, axis, per_ue):
    """Mean final sum SE over drops.

    Returns {(combiner, precoder_mode, se_path): (x values, y means)} with
    the per-drop value taken from the last iteration of that drop.
    """
    final = {}
    for r in rows:
        key = (r["combiner"], r["precoder_mode"], r["se_path"], r[axis], r["drop_seed"])
        prev = final.get(key)
        if prev is None or r["iteration"] >= prev[0]:
            value = r["sum_se"] / (r["k_total"] if per_ue else 1)
            final[key] = (r["iteration"], value)

    grouped = {}
    for (comb, prec, path, x, _seed), (_, value) in final.items():
        grouped.setdefault((comb, prec, path), {}).setdefault(x, []).append(value)
    curves = {}
    for variant, by_x in grouped.items():
        xs = np.array(sorted(by_x))
        ys = np.array([np.mean(by_x[x]) for x in xs])
        curves[variant] = (xs, ys)
    return curves


def check_marker_line_agreement(curves):
    """Closed-form ordinates must sit on the Monte-Carlo lines (2%)."""
    for (comb, prec, path), (xs, ys) in sorted(curves.items()):
        if path != "closed":
            continue
        mc = curves.get((comb, prec, "mc"))
        if mc is None:
            continue
        mc_x, mc_y = mc
        for x, y in zip(xs, ys):
            where = np.flatnonzero(mc_x == x)
            if where.size == 0:
                continue
            ref = mc_y[where[0]]
            if abs(y - ref) > MARKER_LINE_REL_TOL * abs(ref):
                raise ValueError(
                    f"closed-form ordinate {y:.6g} deviates from the "
                    f"Monte-Carlo line {ref:.6g} by more than "
                    f"{100 * MARKER_LINE_REL_TOL:.0f}% at "
                    f"({comb}, {prec}, {'x=%g' % x})"
                )


def render(spec):
    """Render a FigureSpec to its output path and return the path."""
    info = FIGURES[spec.figure]
    rows = load_results(spec.input_csv)
    curves = aggregate(rows, info["axis"], info["per_ue"])
    if not curves:
        raise ValueError("no rows match the figure selection")
    check_marker_line_agreement(curves)

    plt.rcParams.update({
        "figure.figsize": (6.4, 4.4),
        "svg.hashsalt": "cfmimo-plots",
        "font.size": 10,
    })
    fig, ax = plt.subplots()
    for (comb, prec, path), (xs, ys) in sorted(curves.items()):
        color = _COLORS.get((comb, prec), "tab:gray")
        label = f"{comb.upper()}, {prec}"
        if path == "closed" and (comb, prec, "mc") in curves:
            ax.plot(xs, ys, linestyle="none", marker="o", markerfacecolor="none",
                    color=color, label=f"{label} (closed form)")
        else:
            marker = "o" if path == "closed" else None
            ax.plot(xs, ys, marker=marker,
                    markerfacecolor="none" if path == "closed" else None,
                    color=color, label=label + (" (closed form)" if path == "closed" else ""))
    ax.set_xlabel(info["xlabel"])
    ax.set_ylabel(info["ylabel"])
    ax.grid(True, alpha=0.4)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.output, format=spec.format, metadata=_no_timestamp(spec.format))
    plt.close(fig)
    return spec.output


def _no_timestamp(fmt):
    if fmt == "svg":
        return {"Date": None}
    return {"Software": "cfmimo-plots"}
