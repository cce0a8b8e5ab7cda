"""xmodal command-line entry point.

    xmodal gen-data  --run-dir RUN [--config PATH] [--seed N] [--holdout-frac F] [--force]
    xmodal train     --run-dir RUN --strategy NAME [--force]
    xmodal eval      --run-dir RUN [--strategy NAME] [--layer fc7] [--n-queries 1000]
    xmodal zeroshot  --run-dir RUN [--strategy NAME]
    xmodal units     --run-dir RUN [--strategy NAME] [--layer shared_in] [--top-k 5]
    xmodal export    --run-dir RUN [--strategy NAME] [--layer fc7]
    xmodal gradcheck [--tolerance 1e-5] [--seeds 10]
    xmodal compare   --run-dir RUN [--run-dir RUN ...] [--layer fc7]

Human tables go to stdout, machine JSON to <run_dir>/reports. Exit codes:
0 ok, 2 config, 3 I/O, 4 divergence, 5 missing checkpoint, 6 no holdout,
7 gradient check failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
from dotenv import load_dotenv

from .crossmodal import (LAYER_IDS, REGULARIZED_LAYERS, CrossModalNet, StrategyKind, StrategySpec,
                         create_strategy, fit_anchor_densities, load_checkpoint,
                         placesnet_baseline, run_gradcheck_suite, save_checkpoint, train_anchor,
                         train_strategy)
from .crossmodal.checkpoint import anchor_as_model
from .density import (DensityKind, LayerDensitySet, density_path, load_density_set,
                      save_density_set)
from .errors import (EXIT_IO, EXIT_OK, GradCheckFailure, HoldoutError, MissingArtifactError,
                     XModalError)
from .evalkit import (ConsistencyRule, RetrievalProtocol, accuracy_text, chance_map_estimate,
                      classification_report, collect_features, expected_random_map,
                      export_embeddings, layer_sweep, layer_sweep_text, mean_std_text,
                      modality_neighbor_purity, percent_table, permutation_consistency_baseline,
                      retrieval_eval, retrieval_text, unit_consistency, write_json, write_text,
                      zero_shot_classify, zero_shot_retrieval)
from .netcore import RngState
from .synthdata import (CrossModalDataset, Split, generate_dataset, holdout_classes,
                        random_holdout, read_dataset, write_dataset)
from .utils.config import RunConfig, load_config, save_config
from .utils.logger import attach_run_log, detach_run_log, setup_logging
from .utils.run_dir import RunDirectory

logger = logging.getLogger(__name__)

STRATEGY_NAMES = [kind.value for kind in StrategyKind]


def _config(args, run: Optional[RunDirectory] = None) -> RunConfig:
    if getattr(args, "config", None):
        config = load_config(args.config)
    elif run is not None and run.config_path.exists():
        config = load_config(run.config_path)
    else:
        config = load_config()
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
        config.validate()
    return config


def _open_run(args) -> RunDirectory:
    run = RunDirectory(args.run_dir).ensure()
    attach_run_log(run.root)
    return run


def _dataset(run: RunDirectory) -> CrossModalDataset:
    if not run.dataset_path.exists():
        raise FileNotFoundError(f"no dataset at {run.dataset_path}; run `xmodal gen-data` first")
    return read_dataset(run.dataset_path)


def _anchor_fingerprint(config: RunConfig) -> str:
    train = config.train
    return config.fingerprint(["data", "zeroshot", "arch"],
                              extra={"anchor_iters": train.anchor_iters, "anchor_lr": train.anchor_lr,
                                     "batch_size": train.batch_size,
                                     "weight_decay": train.weight_decay})


def _anchor(run: RunDirectory, config: RunConfig, dataset: CrossModalDataset,
            force: bool) -> CrossModalNet:
    fingerprint = _anchor_fingerprint(config)
    if not force and run.is_complete("anchor", fingerprint, [run.anchor_path]):
        logger.info(f"Reusing anchor network from {run.anchor_path}")
        return load_checkpoint(run.anchor_path).network(dataset.anchor)
    anchor = train_anchor(dataset, config.arch, config.train.anchor_schedule(),
                          RngState(config.seed).child("anchor"))
    save_checkpoint(anchor_as_model(anchor), run.anchor_path)
    run.mark_complete("anchor", fingerprint)
    return anchor


def _densities(run: RunDirectory, config: RunConfig, dataset: CrossModalDataset,
               anchor: CrossModalNet, kind: DensityKind, force: bool) -> LayerDensitySet:
    stage = f"densities/{kind.value}"
    fingerprint = config.fingerprint(["reg"], extra={"anchor": _anchor_fingerprint(config),
                                                     "kind": kind.value})
    blobs = [density_path(run.densities_dir, kind, layer) for layer in REGULARIZED_LAYERS]
    if not force and run.is_complete(stage, fingerprint, blobs):
        logger.info(f"Reusing {kind.value} densities from {run.densities_dir}")
        return load_density_set(run.densities_dir, kind, REGULARIZED_LAYERS)
    densities = fit_anchor_densities(anchor, dataset, kind, RngState(config.seed).child(stage),
                                     max_samples=config.reg.max_samples,
                                     em_config=config.reg.em_config(),
                                     variance_floor=config.reg.variance_floor)
    save_density_set(densities, run.densities_dir)
    run.mark_complete(stage, fingerprint)
    return densities


def _strategies(run: RunDirectory, requested: Optional[str]) -> List[str]:
    if requested:
        if not run.checkpoint_path(requested).exists():
            raise MissingArtifactError(f"no checkpoint for {requested} in {run.checkpoints_dir}")
        return [requested]
    names = run.trained_strategies()
    if not names:
        raise MissingArtifactError(f"no checkpoints in {run.checkpoints_dir}; run `xmodal train` first")
    return names


def _emit(run: RunDirectory, stem: str, data: Dict, text: str) -> None:
    write_json(data, run.reports_dir / f"{stem}.json")
    write_text(text, run.reports_dir / f"{stem}.txt")
    print(text)


def cmd_gen_data(args) -> None:
    run = _open_run(args)
    config = _config(args, run)
    if args.holdout_frac is not None:
        config.zeroshot.holdout_frac = args.holdout_frac
        config.validate()
    fingerprint = config.fingerprint(["data", "zeroshot"])
    if not args.force and run.is_complete("data", fingerprint, [run.dataset_path]):
        logger.info(f"Dataset in {run.root} is up to date; use --force to regenerate")
        dataset = read_dataset(run.dataset_path)
    else:
        dataset = generate_dataset(config.data, config.seed)
        if config.zeroshot.holdout_frac > 0:
            holdout = random_holdout(dataset.n_classes, config.zeroshot.holdout_frac,
                                     RngState(config.seed).child("holdout"))
            dataset = holdout_classes(dataset, holdout)
        write_dataset(dataset, run.dataset_path)
        save_config(config, run.config_path)
        run.invalidate("")
        run.mark_complete("data", fingerprint)

    for split in (Split.TRAIN, Split.VAL):
        print(f"{split.name.lower()} examples per modality and class")
        print(dataset.class_counts(split).to_string())
        print()
    if dataset.holdout is not None:
        print(f"held-out classes: {sorted(dataset.holdout.classes)} "
              f"(removed from {list(dataset.holdout.affected(dataset))} training splits)")


def cmd_train(args) -> None:
    run = _open_run(args)
    config = _config(args, run)
    spec = StrategySpec(kind=StrategyKind(args.strategy), curriculum=config.train.schedule(),
                        reg=config.reg.reg_config(), replay_anchor=config.train.replay_anchor)
    spec.validate()
    dataset = _dataset(run)
    save_config(config, run.config_path)

    stage = f"train/{spec.kind.value}"
    fingerprint = config.fingerprint(["data", "zeroshot", "arch", "train", "reg"])
    checkpoint = run.checkpoint_path(spec.kind.value)
    if not args.force and run.is_complete(stage, fingerprint, [checkpoint]):
        logger.info(f"{spec.kind.value} already trained in {run.root}; use --force to retrain")
        model = load_checkpoint(checkpoint)
    else:
        anchor = _anchor(run, config, dataset, args.force) if spec.needs_anchor else None
        densities = None
        if spec.density_kind is not None and spec.reg.active_layers():
            densities = _densities(run, config, dataset, anchor, spec.density_kind, args.force)
        result = train_strategy(spec, dataset, anchor, config.arch, RngState(config.seed).child("train"),
                                densities=densities, log_every=config.train.log_every,
                                log_path=run.training_log_path(spec.kind.value))
        model = result.model
        save_checkpoint(model, checkpoint)
        run.mark_complete(stage, fingerprint)
    accuracy = classification_report(model, dataset)["accuracy"].to_dict()
    print(accuracy_text(accuracy, f"{spec.kind.value}: validation accuracy"))


def cmd_eval(args) -> None:
    run = _open_run(args)
    config = _config(args, run)
    dataset = _dataset(run)
    layer = args.layer or config.eval.layer
    protocol = RetrievalProtocol(n_queries=args.n_queries or config.eval.n_queries, layer=layer,
                                 seed=config.seed, pr_k=config.eval.pr_k)
    counts = dataset.class_counts(Split.VAL).loc[dataset.anchor].to_numpy()
    chance = {"closed_form": expected_random_map(counts)}
    chance["monte_carlo"], chance["monte_carlo_std"] = chance_map_estimate(
        counts, protocol.n_queries, config.eval.chance_trials, config.seed)

    for strategy in _strategies(run, args.strategy):
        model = load_checkpoint(run.checkpoint_path(strategy))
        report = retrieval_eval(collect_features(model, dataset, layer), protocol, strategy=strategy)
        sweep = layer_sweep(model, dataset, protocol, REGULARIZED_LAYERS, strategy=strategy)
        accuracy = classification_report(model, dataset)["accuracy"].to_dict()
        data = {**report.to_dict(), "chance": chance, "classification": accuracy,
                "layers": sweep.to_dict(orient="index")}
        text = (retrieval_text(report)
                + f"chance mAP: {100 * chance['closed_form']:.1f}\n\n"
                + layer_sweep_text(sweep) + "\n"
                + accuracy_text(accuracy, "Validation accuracy", chance=1.0 / dataset.n_classes))
        _emit(run, f"retrieval_{strategy}_{layer}", data, text)


def cmd_zeroshot(args) -> None:
    run = _open_run(args)
    config = _config(args, run)
    dataset = _dataset(run)
    if dataset.holdout is None:
        raise HoldoutError(f"dataset in {run.root} was generated without a class holdout "
                           f"(use gen-data --holdout-frac)")
    held = sorted(dataset.holdout.classes)
    protocol = RetrievalProtocol(n_queries=config.eval.n_queries, layer=config.eval.layer,
                                 seed=config.seed, pr_k=config.eval.pr_k)
    affected = list(dataset.holdout.affected(dataset))
    val_counts = dataset.class_counts(Split.VAL).loc[affected[0], held].to_numpy()

    models = {name: load_checkpoint(run.checkpoint_path(name)) for name in _strategies(run, args.strategy)}
    if run.anchor_path.exists() and args.strategy is None:
        anchor = load_checkpoint(run.anchor_path).network(dataset.anchor)
        models["bl_placesnet"] = placesnet_baseline(anchor, dataset, config.arch,
                                                    RngState(config.seed).child("placesnet"))

    for name, model in models.items():
        accuracy = zero_shot_classify(model, dataset)
        features = collect_features(model, dataset, protocol.layer)
        report = zero_shot_retrieval(features, held, dataset.anchor, protocol, strategy=name)
        data = {"strategy": name, "held_out": held, "accuracy": accuracy,
                "chance_accuracy": 1.0 / dataset.n_classes, "retrieval": report.to_dict(),
                "chance_map": expected_random_map(val_counts)}
        text = (accuracy_text(accuracy, f"{name}: zero-shot accuracy on {len(held)} held-out classes",
                              chance=1.0 / dataset.n_classes)
                + "\n" + retrieval_text(report)
                + f"chance mAP: {100 * data['chance_map']:.1f}\n")
        _emit(run, f"zeroshot_{name}", data, text)


def cmd_units(args) -> None:
    run = _open_run(args)
    config = _config(args, run)
    dataset = _dataset(run)
    layer = args.layer or config.eval.units_layer
    top_k = args.top_k or config.eval.top_k
    untrained = create_strategy(StrategySpec(kind=StrategyKind.BL_SHARED_SCRATCH)).build_model(
        dataset, None, config.arch, RngState(config.seed).child("train").child("init"))
    untrained_features = collect_features(untrained, dataset, layer)

    for strategy in _strategies(run, args.strategy):
        model = load_checkpoint(run.checkpoint_path(strategy))
        features = collect_features(model, dataset, layer)
        rows = {}
        for rule in ConsistencyRule:
            options = dict(top_k=top_k, rule=rule, anchor=dataset.anchor,
                           min_anchor_agree=config.eval.min_anchor_agree)
            trained = unit_consistency(features, layer=layer, **options)
            fresh = unit_consistency(untrained_features, layer=layer, **options)
            oracle, oracle_std = permutation_consistency_baseline(
                features, n_permutations=config.eval.n_permutations,
                rng=RngState(config.seed).child(f"units/{rule.value}"), **options)
            if rule is ConsistencyRule.MAJORITY:
                rows[rule.value] = {"trained": trained.rate, "untrained": fresh.rate,
                                    "permutation": oracle, "permutation_std": oracle_std}
            else:
                for level, rate in trained.rates_by_level.items():
                    rows[f"{rule.value} m>={level}"] = {
                        "trained": rate, "untrained": fresh.rates_by_level[level],
                        "permutation": oracle if level == 1 else float("nan"),
                        "permutation_std": oracle_std if level == 1 else float("nan")}
        table = pd.DataFrame.from_dict(rows, orient="index")
        table.index.name = "rule"
        text = f"{strategy}: unit consistency at {layer}, top-{top_k} (%)\n{percent_table(table)}\n"
        _emit(run, f"units_{strategy}_{layer}",
              {"strategy": strategy, "layer": layer, "top_k": top_k,
               "rates": table.to_dict(orient="index")}, text)


def cmd_export(args) -> None:
    run = _open_run(args)
    config = _config(args, run)
    dataset = _dataset(run)
    layer = args.layer or config.eval.layer
    for strategy in _strategies(run, args.strategy):
        model = load_checkpoint(run.checkpoint_path(strategy))
        features = collect_features(model, dataset, layer)
        path = export_embeddings(features, run.reports_dir / f"embeddings_{strategy}_{layer}.csv",
                                 cap=config.eval.export_cap, rng=RngState(config.seed).child("export"))
        purity, baseline = modality_neighbor_purity(features, k=config.eval.purity_k)
        print(f"{strategy}: wrote {path}")
        print(f"  modality purity of {config.eval.purity_k} nearest neighbours: {100 * purity:.1f}% "
              f"(modality-agnostic: {100 * baseline:.1f}%)")


def cmd_gradcheck(args) -> None:
    config = _config(args)
    tolerance = args.tolerance if args.tolerance is not None else config.eval.gradcheck_tol
    n_seeds = args.seeds if args.seeds is not None else config.eval.gradcheck_seeds
    suite = run_gradcheck_suite(seeds=range(n_seeds), tolerance=tolerance, corruption=args.corrupt)
    table = pd.DataFrame([{"case": c.name, "seed": c.seed, "max_rel_error": c.result.max_rel_error,
                           "coords": c.result.n_checked} for c in suite.cases])
    summary = table.groupby("case", sort=False).agg(max_rel_error=("max_rel_error", "max"),
                                                    coords=("coords", "sum"))
    print(summary.to_string(float_format=lambda v: f"{v:.2e}"))
    worst = suite.worst
    if not suite.passed:
        raise GradCheckFailure(
            f"gradient check failed: {worst.name} seed {worst.seed}, {worst.result.worst_param}"
            f"{list(worst.result.worst_index or [])} analytic {worst.result.analytic:.6e} "
            f"numeric {worst.result.numeric:.6e} rel err {worst.result.max_rel_error:.3e} "
            f"> {tolerance:g}")
    print(f"PASS: max relative error {worst.result.max_rel_error:.2e} < {tolerance:g}")


def cmd_compare(args) -> None:
    layer = args.layer
    retrieval: Dict[str, Dict[str, Dict[str, float]]] = {}
    zeroshot: Dict[str, Dict[str, Dict[str, float]]] = {}
    for run_dir in args.run_dir:
        reports = Path(run_dir) / "reports"
        for path in sorted(reports.glob(f"retrieval_*_{layer}.json")):
            data = json.loads(path.read_text(encoding="utf-8"))
            retrieval.setdefault(data["strategy"], {})[run_dir] = {
                "map": data["grand_mean"], f"pr@{data['pr_k']}": data["precision_grand_mean"]}
        for path in sorted(reports.glob("zeroshot_*.json")):
            data = json.loads(path.read_text(encoding="utf-8"))
            zeroshot.setdefault(data["strategy"], {})[run_dir] = {
                **{f"acc {m}": v for m, v in data["accuracy"].items()},
                "map": data["retrieval"]["grand_mean"]}
    if not retrieval and not zeroshot:
        raise MissingArtifactError(f"no reports found under {args.run_dir}")
    for strategy in sorted(retrieval):
        print(mean_std_text(retrieval[strategy], f"{strategy}: retrieval at {layer}"))
    for strategy in sorted(zeroshot):
        print(mean_std_text(zeroshot[strategy], f"{strategy}: zero-shot"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xmodal",
                                     description="Cross-modal scene networks at desk scale")
    parser.add_argument("--log-level", default=None, help="override the configured log level")
    commands = parser.add_subparsers(dest="command", required=True)

    def command(name: str, handler, help_text: str, run_dir: bool = True):
        sub = commands.add_parser(name, help=help_text)
        sub.set_defaults(handler=handler)
        sub.add_argument("--config", default=None, help="YAML run configuration")
        sub.add_argument("--seed", type=int, default=None, help="override the configured seed")
        if run_dir:
            sub.add_argument("--run-dir", required=True, help="run directory")
        return sub

    gen = command("gen-data", cmd_gen_data, "generate the synthetic dataset")
    gen.add_argument("--holdout-frac", type=float, default=None,
                     help="fraction of classes removed from non-anchor training splits")
    gen.add_argument("--force", action="store_true")

    train = command("train", cmd_train, "train one strategy")
    train.add_argument("--strategy", required=True, choices=STRATEGY_NAMES)
    train.add_argument("--force", action="store_true")

    evaluate = command("eval", cmd_eval, "cross-modal retrieval reports")
    evaluate.add_argument("--strategy", choices=STRATEGY_NAMES, default=None)
    evaluate.add_argument("--layer", choices=LAYER_IDS[:-1], default=None)
    evaluate.add_argument("--n-queries", type=int, default=None)

    zeroshot = command("zeroshot", cmd_zeroshot, "zero-shot classification and retrieval")
    zeroshot.add_argument("--strategy", choices=STRATEGY_NAMES, default=None)

    units = command("units", cmd_units, "per-unit cross-modal consistency")
    units.add_argument("--strategy", choices=STRATEGY_NAMES, default=None)
    units.add_argument("--layer", choices=LAYER_IDS[:-1], default=None)
    units.add_argument("--top-k", type=int, default=None)

    export = command("export", cmd_export, "export embeddings as CSV")
    export.add_argument("--strategy", choices=STRATEGY_NAMES, default=None)
    export.add_argument("--layer", choices=LAYER_IDS[:-1], default=None)

    gradcheck = command("gradcheck", cmd_gradcheck, "finite-difference gradient checks",
                        run_dir=False)
    gradcheck.add_argument("--tolerance", type=float, default=None)
    gradcheck.add_argument("--seeds", type=int, default=None)
    gradcheck.add_argument("--corrupt", type=float, default=0.0, help=argparse.SUPPRESS)

    compare = commands.add_parser("compare", help="aggregate reports across run directories")
    compare.set_defaults(handler=cmd_compare)
    compare.add_argument("--run-dir", action="append", required=True)
    compare.add_argument("--layer", choices=LAYER_IDS[:-1], default="fc7")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    setup_logging(level=args.log_level)
    try:
        args.handler(args)
    except XModalError as e:
        logger.error(str(e))
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    finally:
        detach_run_log()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
