"""Figure rendering for benchmark outputs; every plot also has a CSV twin."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "proposed": dict(color="#d62728", marker="o"),
    "oracle": dict(color="#2ca02c", marker="*"),
    "strongest+wmmse": dict(color="#1f77b4", marker="s"),
    "random+wmmse": dict(color="#9467bd", marker="^"),
    "strongest+zf": dict(color="#8c564b", marker="v"),
}

_X_LABELS = {"p_max_dbm": "transmit power budget (dBm)",
             "m": "selected antennas M",
             "n": "grid points N"}


def write_plot_data(points, path) -> None:
    """points: iterable of (x, series, y) triples."""
    with open(path, "w") as fh:
        fh.write("x,series,y\n")
        for x, series, y in points:
            fh.write(f"{x:.9g},{series},{y:.9g}\n")


def render_rate_plot(points, x_key: str, path) -> None:
    """One line per series from (x, series, y) triples."""
    series = {}
    for x, name, y in points:
        series.setdefault(name, []).append((x, y))
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for name, xy in series.items():
        xy.sort()
        xs, ys = zip(*xy)
        ax.plot(xs, ys, label=name, **STYLE.get(name, {}))
    ax.set_xlabel(_X_LABELS.get(x_key, x_key))
    ax.set_ylabel("mean sum rate (bits/s/Hz)")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_timing_bar(timings, path) -> None:
    """timings: list of (method, mean_ms)."""
    fig, ax = plt.subplots(figsize=(5.2, 3.2))
    names = [t[0] for t in timings]
    vals = [t[1] for t in timings]
    colors = [STYLE.get(n, {}).get("color", "#555555") for n in names]
    ax.bar(range(len(names)), vals, color=colors)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("mean time per sample (ms)")
    ax.set_yscale("log")
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
