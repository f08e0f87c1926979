"""
Four-panel trajectory figure and the standalone script that reproduces it.

``draw_panels`` only depends on numpy and matplotlib, so its source is
copied verbatim into the emitted plot script.
"""

from __future__ import annotations

import inspect


def draw_panels(columns, data, fig):
    """Draw error, velocity error, sliding variable and torque norm against time.

    Args:
        columns: list of column names.
        data: 2-D array, one row per sample.
        fig: matplotlib Figure to draw into.
    """
    import numpy as np

    t = data[:, columns.index("t")]
    panels = [("err_frobenius", "||I - g_e||_F"), ("err_xi", "||xi_e||"),
              ("sliding_norm", "||sliding variable||"), ("tau_norm", "||tau||")]
    axes = fig.subplots(2, 2, sharex=True)
    for ax, (name, label) in zip(axes.ravel(), panels):
        y = data[:, columns.index(name)]
        if name != "tau_norm" and np.all(y > 0):
            ax.semilogy(t, y, lw=1.0)
        else:
            ax.plot(t, y, lw=1.0)
        ax.set_ylabel(label)
        ax.grid(True, which="both", alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel("t [s]")
    fig.tight_layout()
    return fig


def render_panels(traj, png_path, title=None) -> None:
    """Render a :class:`geosmc.report.Trajectory` to a PNG with the Agg backend."""
    from matplotlib.figure import Figure
    from matplotlib.backends.backend_agg import FigureCanvasAgg

    fig = Figure(figsize=(9, 6))
    FigureCanvasAgg(fig)
    draw_panels(traj.columns, traj.data, fig)
    if title:
        fig.suptitle(title)
        fig.subplots_adjust(top=0.92)
    fig.savefig(png_path, dpi=120)


_SCRIPT_MAIN = '''

def main():
    import sys
    import numpy as np
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    csv_path = sys.argv[1] if len(sys.argv) > 1 else {csv!r}
    out_path = sys.argv[2] if len(sys.argv) > 2 else {png!r}
    with open(csv_path) as fh:
        rows = [line.strip() for line in fh if line.strip() and not line.startswith("#")]
    header = rows[0].split(",")
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    fig = plt.figure(figsize=(9, 6))
    draw_panels(header, data, fig)
    fig.savefig(out_path, dpi=120)
    print("wrote", out_path)


if __name__ == "__main__":
    main()
'''


def plot_script_text(csv_name: str, png_name: str) -> str:
    """Python source of a standalone script that redraws the panels from the CSV."""
    return ("#!/usr/bin/env python3\n"
            '"""Redraw trajectory panels: python3 <script> [csv] [png]"""\n\n'
            + inspect.getsource(draw_panels)
            + _SCRIPT_MAIN.format(csv=csv_name, png=png_name))
