"""Command-line entry point.

Exit codes: 0 success, 1 runtime or data error, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import ConfigError, FraudFusionError, SchemaError

log = logging.getLogger("fraudfusion")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file or bundled preset name (default: $FRAUDFUSION_CONFIG)")
    common.add_argument("--seed", type=int, help="override the data seed (generate) or master seed (others)")
    common.add_argument("--threads", type=int, help="worker threads; outputs do not depend on it")
    common.add_argument("--scenarios", help="comma-separated scenario ids, e.g. S+C or C,S,S+M+C")
    common.add_argument("--acl", type=float, help="cost of a false negative (average credit line)")
    common.add_argument("--clv", type=float, help="customer lifetime value")
    common.add_argument("--churn-prob", type=float, help="probability a rejected customer churns")
    common.add_argument("--out", help="output directory (generate: CSV path)")
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("overrides", nargs="*", metavar="key=value", help="config overrides, dotted keys")

    p = argparse.ArgumentParser(prog="fraudfusion", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write a synthetic dataset CSV and schema sidecar")
    sub.add_parser("train", parents=[common], help="grid-search and fit one scenario model")
    ev = sub.add_parser("evaluate", parents=[common], help="bootstrap-evaluate a saved model on the test split")
    ev.add_argument("--model", required=True)
    ex = sub.add_parser("explain", parents=[common], help="SHAP attributions for a saved model")
    ex.add_argument("--model", required=True)
    ex.add_argument("--data", help="CSV to explain (default: the config dataset)")
    ex.add_argument("--rows", default="all", help="'all' for global importance, or comma-separated row indices")
    ex.add_argument("--subset", choices=("test", "all"), default="test", help="rows the indices refer to")
    ex.add_argument("--by-source", action="store_true", help="sum one-hot siblings into raw-column importance")
    sub.add_parser("compare", parents=[common], help="run every configured scenario and write the report")
    return p


def _prepare_threads(n):
    # must happen before numba is first imported to allow more threads than cores
    if n and "numba" not in sys.modules:
        current = int(os.environ.get("NUMBA_NUM_THREADS", os.cpu_count() or 1))
        os.environ["NUMBA_NUM_THREADS"] = str(max(current, n))
    os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")


def _config(args):
    from .config import load_config

    cfg = load_config(args.config, args.overrides)
    if args.seed is not None:
        if args.command == "generate":
            if not cfg.get("synth"):
                raise ConfigError("config has no synth section")
            cfg["synth"]["noise_seed"] = args.seed
        else:
            cfg["master_seed"] = args.seed
    for flag, key in (("acl", "acl"), ("clv", "clv"), ("churn_prob", "churn_given_reject")):
        v = getattr(args, flag)
        if v is not None:
            cfg["costs"][key] = v
    if args.scenarios:
        cfg["scenarios"] = [s for s in args.scenarios.split(",") if s.strip()]
    if args.out and args.command != "generate":
        cfg["output_dir"] = args.out
    if args.threads is not None:
        cfg["threads"] = args.threads
    return cfg


def _load_encoded(cfg, csv_path=None):
    from .config import load_schema
    from .dataset import encode, ingest_csv

    path = csv_path or cfg["data"]["csv"]
    if not Path(path).is_file():
        raise ConfigError(f"dataset not found: {path} (run 'fraudfusion generate' first)")
    return encode(ingest_csv(path, load_schema(cfg)))


def cmd_generate(cfg, args) -> int:
    from .dataset import write_csv
    from .synthgen import SynthSpec, generate

    if not cfg.get("synth"):
        raise ConfigError("config has no synth section")
    spec = SynthSpec.from_dict(cfg["synth"])
    data = generate(spec)
    csv_path = Path(args.out) if args.out else Path(cfg["data"]["csv"])
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(data, csv_path)
    schema_path = csv_path.with_name(csv_path.stem + ".schema.yaml") if args.out else None
    if schema_path is None:
        from .config import schema_path_for

        schema_path = schema_path_for(cfg)
    spec.schema.save(schema_path)
    y = data.y
    tr = y[: spec.train_size]
    te = y[spec.train_size:]
    print(f"wrote {csv_path} ({data.n_rows} rows, {len(spec.schema.columns)} raw columns) and {schema_path}")
    print(f"train segment: {len(tr)} rows, {int(tr.sum())} fraud ({100 * tr.mean():.2f}%)")
    print(f"test segment:  {len(te)} rows, {int(te.sum())} fraud ({100 * te.mean():.2f}%)")
    return EXIT_OK


def cmd_train(cfg, args) -> int:
    from dataclasses import replace

    from .config import ExperimentConfig
    from .dataset import select_scenario
    from .experiment import _split, model_filename, scenario_seeds
    from .gbdt import fit, grid_search

    config = ExperimentConfig.from_dict(cfg)
    if len(config.scenarios) != 1:
        if args.scenarios:
            raise ConfigError("train fits one scenario; pass a single id to --scenarios")
        config.scenarios = [s for s in config.scenarios if s.id == "S+M+C"] or config.scenarios[-1:]
    scenario = config.scenarios[0]
    train, _ = _split(_load_encoded(cfg), config)
    tr = select_scenario(train, scenario)
    seeds = scenario_seeds(config.master_seed, scenario)
    base = replace(config.base_params, seed=seeds["fit"] % (2**63))
    best, table = grid_search(tr, config.grid, config.holdout_fraction, base=base)
    model = fit(tr, best)
    out = Path(config.output_dir) / "models"
    out.mkdir(parents=True, exist_ok=True)
    path = out / model_filename(scenario)
    model.save(path)
    for params, auc in table:
        print(f"  {auc:.4f}  {params.to_dict()}")
    print(f"scenario {scenario.id}: best {best.to_dict()}")
    print(f"saved {path}")
    return EXIT_OK


def _test_view(cfg, model, config):
    from .dataset import Scenario, SCENARIOS, select_scenario
    from .experiment import _split

    groups = frozenset(model.feature_groups)
    scenario = next((s for s in SCENARIOS.values() if s.groups == groups), None)
    if scenario is None:
        raise SchemaError("model feature groups do not match any scenario")
    _, test = _split(_load_encoded(cfg), config)
    return scenario, select_scenario(test, Scenario.parse(scenario.id))


def cmd_evaluate(cfg, args) -> int:
    from .config import ExperimentConfig
    from .experiment import ScenarioResult, comparison_rows, format_table, scenario_seeds
    from .gbdt import GbdtModel
    from .metrics import bootstrap_evaluate

    config = ExperimentConfig.from_dict(cfg)
    model = GbdtModel.load(args.model)
    scenario, test = _test_view(cfg, model, config)
    scenario_seed = scenario_seeds(config.master_seed, scenario)["bootstrap"]
    summary = bootstrap_evaluate(model.predict_score(test), test.y, config.costs, config.n_bootstrap, scenario_seed)
    row = ScenarioResult(scenario, model.params, summary, None, Path(args.model), [], {})
    print(format_table(comparison_rows([row])), end="")
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"evaluation_{scenario.id}.json"
    record = {"scenario": scenario.id, "model": Path(args.model).name, "costs": config.costs.to_dict(), **summary.to_dict()}
    path.write_text(json.dumps(record, indent=1) + "\n", encoding="utf-8")
    print(f"saved {path}")
    return EXIT_OK


def cmd_explain(cfg, args) -> int:
    import numpy as np

    from .config import ExperimentConfig
    from .dataset import LabeledDataset
    from .explain import global_importance, tree_shap, write_importance
    from .gbdt import GbdtModel
    from .experiment import _split

    config = ExperimentConfig.from_dict(cfg)
    model = GbdtModel.load(args.model)
    data = _load_encoded(cfg, args.data)
    if args.subset == "test":
        _, data = _split(data, config)
    keep = [j for j, c in enumerate(data.columns) if c.group in set(model.feature_groups)]
    view = LabeledDataset(data.schema.subset(set(model.feature_groups)), data.X[:, keep], data.y, data.order,
                          tuple(data.columns[j] for j in keep), True) if keep else data
    if view.schema_fingerprint != model.schema_fingerprint:
        raise SchemaError(
            f"schema fingerprint mismatch: model {model.schema_fingerprint}, data {view.schema_fingerprint}"
        )
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.model).stem
    if args.rows == "all":
        imp = global_importance(model, view, aggregate_sources=args.by_source)
        csv_path = out / f"explain_{stem}.csv"
        write_importance(imp, csv_path, out / f"explain_{stem}.json")
        for rank, e in enumerate(imp.entries[:10], start=1):
            print(f"{rank:>3}  {e.mean_abs_shap:.4f}  {e.group.value:<8}  {e.feature}")
        print(f"saved {csv_path}")
        return EXIT_OK

    try:
        rows = [int(r) for r in args.rows.split(",")]
    except ValueError:
        raise ConfigError(f"--rows must be 'all' or comma-separated integers, got {args.rows!r}") from None
    records = []
    status = EXIT_OK
    for r in rows:
        if not 0 <= r < view.n_rows:
            raise ConfigError(f"row {r} out of range (0..{view.n_rows - 1})")
        ex = tree_shap(model, view.X[r])
        gap = ex.efficiency_gap
        ok = gap < 1e-8
        status = status if ok else EXIT_RUNTIME
        print(f"row {r}: base {ex.base_value:.6f} + sum(phi) {float(np.sum(ex.phi)):.6f} = "
              f"{ex.base_value + float(np.sum(ex.phi)):.6f}; margin {ex.prediction_margin:.6f}; "
              f"gap {gap:.2e} {'ok' if ok else 'FAILED'}")
        records.append({
            "row": r,
            "base_value": ex.base_value,
            "prediction_margin": ex.prediction_margin,
            "phi": dict(zip(view.feature_names, map(float, ex.phi))),
        })
    path = out / f"explain_{stem}_rows.json"
    path.write_text(json.dumps(records, indent=1) + "\n", encoding="utf-8")
    print(f"saved {path}")
    return status


def cmd_compare(cfg, args) -> int:
    from .config import ExperimentConfig
    from .experiment import comparison_rows, format_table, render_report, run_experiment, write_failure_manifest

    config = ExperimentConfig.from_dict(cfg)
    try:
        data = _load_encoded(cfg)
        results = run_experiment(data, config)
        render_report(results, config.output_dir, config,
                      extra_manifest={"data": {"csv": Path(cfg["data"]["csv"]).name, "rows": data.n_rows}})
    except Exception as e:
        write_failure_manifest(config.output_dir, e, config)
        raise
    print(format_table(comparison_rows(results)), end="")
    print(f"reports in {config.output_dir}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "explain": cmd_explain,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    _prepare_threads(args.threads)
    try:
        cfg = _config(args)
        if cfg.get("threads"):
            from .gbdt import set_threads

            set_threads(cfg["threads"])
        return COMMANDS[args.command](cfg, args)
    except FraudFusionError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
