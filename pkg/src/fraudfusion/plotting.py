"""Figure rendering for run reports. Everything goes to files via the Agg backend."""
from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .dataset import FeatureGroup  # noqa: E402

GROUP_COLORS = {
    FeatureGroup.SUPER_APP: "#d95f02",
    FeatureGroup.MOBILE: "#1b9e77",
    FeatureGroup.BUREAU: "#7570b3",
}

REPORT_RC = {
    "font.size": 10,
    "axes.titlesize": 11,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    "svg.hashsalt": "fraudfusion",
}

# no Software/Creation stamps, so identical data gives identical bytes
_PNG_METADATA = {"Software": None}


@contextmanager
def report_style():
    with plt.rc_context(REPORT_RC):
        yield


def _save(fig, path):
    path = Path(path)
    fig.savefig(path, metadata=_PNG_METADATA if path.suffix == ".png" else None)
    plt.close(fig)


def loss_bar_chart(records: list, path) -> None:
    """Bar per scenario of mean financial loss with a std error bar."""
    labels = [r["scenario"] for r in records]
    means = [r["mean"] for r in records]
    stds = [r["std"] for r in records]
    with report_style():
        fig, ax = plt.subplots(figsize=(6, 3.6))
        ax.bar(labels, means, yerr=stds, color="#4c72b0", capsize=4)
        ax.set_ylabel("financial loss")
        ax.set_xlabel("scenario")
        ax.set_title("Financial loss by input scenario")
        fig.tight_layout()
        _save(fig, path)


def importance_bar_chart(importance, path, top: int = 20, title: str | None = None) -> None:
    """Horizontal bars of mean |SHAP|, largest on top, coloured by feature group."""
    entries = list(importance.entries[:top])[::-1]
    with report_style():
        fig, ax = plt.subplots(figsize=(6, 0.28 * len(entries) + 1.2))
        ax.barh(
            [e.feature for e in entries],
            [e.mean_abs_shap for e in entries],
            color=[GROUP_COLORS[e.group] for e in entries],
        )
        handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in GROUP_COLORS.values()]
        ax.legend(handles, [g.value for g in GROUP_COLORS], loc="lower right", frameon=False)
        ax.set_xlabel("mean |SHAP| (log-odds)")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)
