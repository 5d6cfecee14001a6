import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from app.harness.schemas import SweepRecord  # noqa: E402

logger = logging.getLogger(__name__)

METRICS = ["rmse_target", "rmse_scatterer", "nmse_radar", "nmse_comm"]
_KEYS = ["method", "snr_db", "trial"]


def records_frame(records: list[SweepRecord]) -> pd.DataFrame:
    rows = [record.model_dump() for record in records]
    return pd.DataFrame(rows, columns=list(SweepRecord.model_fields))


def aggregate(frame: pd.DataFrame) -> pd.DataFrame:
    """
    Mean and standard error of every metric per (method, SNR), successful trials only.
    """
    ok = frame[frame["status"] == "ok"]
    columns = METRICS + ["miss_count", "false_alarm_count", "user_pos_error", "tau_offset_error"]
    grouped = ok.groupby(["method", "snr_db"], sort=False)[columns]
    table = grouped.agg(["mean", "sem", "count"])
    table.columns = [f"{metric}_{stat}" for metric, stat in table.columns]
    return table.reset_index()


def write_reports(
    records: list[SweepRecord], out_dir: str | Path, plots: bool = True
) -> list[Path]:
    """
    Write records.csv, timings.csv, aggregate.csv and, optionally, SVG curves.

    records.csv carries no timing column so identical sweeps give identical files.

    Args:
        records: Sweep records
        out_dir: Output directory (created if needed)
        plots: Also write rmse.svg and nmse.svg

    Returns:
        Paths of the written files
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frame = records_frame(records)

    written = []
    path = out_dir / "records.csv"
    frame.drop(columns=["wall_time"]).to_csv(path, index=False)
    written.append(path)

    path = out_dir / "timings.csv"
    frame[_KEYS + ["wall_time"]].to_csv(path, index=False)
    written.append(path)

    table = aggregate(frame)
    path = out_dir / "aggregate.csv"
    table.to_csv(path, index=False)
    written.append(path)

    if plots and not table.empty:
        written.append(
            plot_curves(table, ["rmse_target", "rmse_scatterer"], "RMSE (m)", out_dir / "rmse.svg")
        )
        written.append(
            plot_curves(table, ["nmse_radar", "nmse_comm"], "NMSE", out_dir / "nmse.svg", log=True)
        )

    for item in written:
        logger.info(f"Wrote {item}")
    return written


def plot_curves(
    table: pd.DataFrame, metrics: list[str], ylabel: str, path: Path, log: bool = False
) -> Path:
    """
    One panel per metric, one line per method, with standard-error bars.
    """
    fig, axes = plt.subplots(1, len(metrics), figsize=(5 * len(metrics), 4), squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        for method, rows in table.groupby("method", sort=False):
            ax.errorbar(
                rows["snr_db"],
                rows[f"{metric}_mean"],
                yerr=rows[f"{metric}_sem"].fillna(0.0),
                marker="o",
                capsize=3,
                label=method,
            )
        if log:
            ax.set_yscale("log")
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel(ylabel)
        ax.set_title(metric)
        ax.grid(True, alpha=0.3)
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
