"""Scenario comparison: split once, then tune, fit, evaluate and explain per scenario."""
from __future__ import annotations

import json
import logging
import platform
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .dataset import LabeledDataset, Scenario, select_scenario, time_split
from .errors import ConfigError, FraudFusionError
from .explain import GlobalImportance, global_importance, write_importance
from .gbdt import GbdtModel, GbdtParams, fit, grid_search
from .metrics import MetricSummary, bootstrap_evaluate, derive_seed
from . import plotting

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ("Scenario", "AUC", "F1", "Precision", "Recall", "FinancialLoss")


@dataclass
class ScenarioResult:
    scenario: Scenario
    best_params: GbdtParams
    metrics: MetricSummary
    importance: GlobalImportance
    model_path: Path
    grid_table: list
    seeds: dict


def scenario_seeds(master_seed: int, scenario: Scenario) -> dict:
    return {stage: derive_seed(master_seed, scenario.id, stage) for stage in ("fit", "bootstrap")}


def model_filename(scenario: Scenario) -> str:
    return f"model_{scenario.id}.json"


def _split(dataset: LabeledDataset, config: ExperimentConfig):
    if config.train_size is not None:
        return time_split(dataset, train_size=config.train_size)
    return time_split(dataset, train_fraction=config.train_fraction)


def run_scenario(train: LabeledDataset, test: LabeledDataset, scenario: Scenario, config: ExperimentConfig,
                 model_dir: Path) -> ScenarioResult:
    seeds = scenario_seeds(config.master_seed, scenario)
    tr = select_scenario(train, scenario)
    te = select_scenario(test, scenario)
    base = replace(config.base_params, seed=seeds["fit"] % (2**63))
    best, table = grid_search(tr, config.grid, config.holdout_fraction, base=base)
    model = fit(tr, best)
    scores = model.predict_score(te)
    summary = bootstrap_evaluate(scores, te.y, config.costs, config.n_bootstrap, seeds["bootstrap"])
    importance = global_importance(model, te)
    path = model_dir / model_filename(scenario)
    model.save(path)
    logger.info("scenario %s: AUC %.4f F1 %.4f", scenario.id, summary.mean["auc"], summary.mean["f1"])
    return ScenarioResult(scenario, best, summary, importance, path, table, seeds)


def run_experiment(dataset: LabeledDataset, config: ExperimentConfig) -> list:
    """One shared chronological split; scenarios run independently in config order."""
    if not dataset.encoded:
        raise ConfigError("run_experiment expects an encoded dataset")
    train, test = _split(dataset, config)
    model_dir = Path(config.output_dir) / "models"
    model_dir.mkdir(parents=True, exist_ok=True)
    results = []
    for scenario in config.scenarios:
        try:
            results.append(run_scenario(train, test, scenario, config, model_dir))
        except FraudFusionError as e:
            raise type(e)(f"scenario {scenario.id}: {e}") from e
    return results


def _versions() -> dict:
    import matplotlib
    import numba
    import scipy

    return {
        "fraudfusion": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "matplotlib": matplotlib.__version__,
    }


def comparison_rows(results: list) -> list:
    rows = []
    for r in results:
        m = r.metrics
        rows.append([
            r.scenario.id,
            m.fmt("auc", 100),
            m.fmt("f1", 100),
            m.fmt("precision", 100),
            m.fmt("recall", 100),
            m.fmt("financial_loss"),
        ])
    return rows


def format_table(rows: list) -> str:
    table = [list(TABLE_COLUMNS), *rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(TABLE_COLUMNS))]
    lines = []
    for k, r in enumerate(table):
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def render_report(results: list, output_dir: str | Path, config: ExperimentConfig | None = None,
                  extra_manifest: dict | None = None, figures: bool = True) -> dict:
    """Write the comparison table, loss plot data, importance files, figures and a manifest."""
    if not results:
        raise ConfigError("no results to report")
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "importance").mkdir(exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot write reports to {out}: {e}") from e

    written = {}
    rows = comparison_rows(results)
    csv_lines = [",".join(TABLE_COLUMNS)] + [",".join(r) for r in rows]
    written["comparison_csv"] = out / "comparison.csv"
    written["comparison_csv"].write_text("\n".join(csv_lines) + "\n", encoding="utf-8")
    written["comparison_txt"] = out / "comparison.txt"
    written["comparison_txt"].write_text(format_table(rows), encoding="utf-8")

    metrics = {r.scenario.id: r.metrics.to_dict() for r in results}
    written["metrics"] = out / "metrics.json"
    written["metrics"].write_text(json.dumps(metrics, indent=1) + "\n", encoding="utf-8")

    loss_records = [
        {"scenario": r.scenario.id, "mean": r.metrics.mean["financial_loss"], "std": r.metrics.std["financial_loss"]}
        for r in results
    ]
    written["financial_loss"] = out / "financial_loss.json"
    written["financial_loss"].write_text(json.dumps(loss_records, indent=1) + "\n", encoding="utf-8")

    for r in results:
        stem = out / "importance" / f"importance_{r.scenario.id}"
        write_importance(r.importance, stem.with_suffix(".csv"), stem.with_suffix(".json"))
        if figures:
            plotting.importance_bar_chart(r.importance, stem.with_suffix(".png"),
                                          title=f"Mean |SHAP|, scenario {r.scenario.id}")
    if figures:
        plotting.loss_bar_chart(loss_records, out / "financial_loss.png")

    manifest = {
        "status": "complete",
        "tuning": "per-scenario grid search on a chronological holdout",
        "shap_space": "margin (log-odds)",
        "importance_rows": "test set",
        "config": config.to_dict() if config else None,
        "scenarios": {
            r.scenario.id: {
                "seeds": r.seeds,
                "best_params": r.best_params.to_dict(),
                "grid": [{"params": p.to_dict(), "validation_auc": auc} for p, auc in r.grid_table],
                "threshold": r.metrics.threshold,
                "model": f"models/{r.model_path.name}",
            }
            for r in results
        },
        "versions": _versions(),
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    written["manifest"] = out / "manifest.json"
    written["manifest"].write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return written


def write_failure_manifest(output_dir: str | Path, error: Exception, config: ExperimentConfig | None = None) -> None:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "status": "failed",
        "error": f"{type(error).__name__}: {error}",
        "partial_outputs": sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file()),
        "config": config.to_dict() if config else None,
        "versions": _versions(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")


def load_models(results_dir: str | Path) -> dict:
    models = {}
    for p in sorted((Path(results_dir) / "models").glob("model_*.json")):
        models[p.stem[len("model_"):]] = GbdtModel.load(p)
    return models
