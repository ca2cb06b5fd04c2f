"""Command-line surface: train, attack, tup, rat, eval, sweep.

Every run resolves to a fully explicit configuration: built-in defaults,
overridden by a JSON config file (--config), overridden by explicit
flags (a warning is emitted when a flag contradicts the config file).
The resolved configuration is echoed into every artifact/report so runs
can be reproduced from their outputs alone.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import warnings

import numpy as np

from . import arrayio
from .attacks import AttackConfig, fgsm, minimal_targeted, pgd, universal_untargeted
from .data import (
    LabeledDataset,
    make_synthetic_gaussians,
    resolve_dataset,
    sample_excluding_target,
    split_train_val,
    SplitSpec,
)
from .errors import ArtifactNotFoundError, BudgetExceededError, ConfigError, RegionAdvError
from .nn import (
    TrainConfig,
    accuracy,
    create_model,
    load_checkpoint,
    model_fingerprint,
    save_checkpoint,
    train_standard,
)
from .rat import RatConfig, partition_by_prediction, rat_train
from .rng import substream
from .tup import TupConfig, compute_tup, load_perturbation, save_perturbation, save_tup
from .evaluation import (
    AttackSpec,
    EvalReport,
    accuracy_under_attack,
    emit_report,
    param_sweep,
    size_of_x_sweep,
    table_from_matrix,
    targeted_success,
)

log = logging.getLogger("regionadv")

EXIT_CODES = {
    "ok": 0,
    "internal": 1,
    "usage": 2,
    "artifact-not-found": 3,
    "config": 4,
    "data-format": 5,
    "input-shape": 6,
    "domain": 6,
    "precondition": 6,
    "training-diverged": 7,
    "numeric": 7,
    "infeasible": 8,
    "budget-exceeded": 9,
    "insufficient-samples": 10,
    "checkpoint": 11,
}

DATA_DIR_ENV = "REGIONADV_DATA_DIR"


def _default_data_dir() -> str:
    return os.environ.get(DATA_DIR_ENV, os.path.join(os.getcwd(), "data"))


def _resolve_options(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags; warn on flag/config conflicts."""
    from_file: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as f:
                from_file = json.load(f)
        except FileNotFoundError:
            raise ArtifactNotFoundError(f"config file not found: {args.config}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config} is not valid JSON: {exc}")
        if not isinstance(from_file, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(from_file) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    resolved = dict(defaults)
    resolved.update(from_file)
    for key in defaults:
        flag_value = getattr(args, key.replace("-", "_"), None)
        if flag_value is not None:
            if key in from_file and from_file[key] != flag_value:
                warnings.warn(
                    f"flag --{key.replace('_', '-')}={flag_value} overrides config "
                    f"value {from_file[key]!r}"
                )
            resolved[key] = flag_value
    return resolved


def _load_data(opts: dict) -> tuple[LabeledDataset, LabeledDataset, str]:
    name = opts.get("dataset", "auto")
    if name == "gaussians":
        means = [(0.2, 0.2), (0.8, 0.8), (0.2, 0.8), (0.8, 0.2), (0.5, 0.1),
                 (0.5, 0.9), (0.1, 0.5), (0.9, 0.5), (0.35, 0.65), (0.65, 0.35)]
        full = make_synthetic_gaussians(300, means, 0.05, seed=opts["seed"])
        train, test = split_train_val(full, SplitSpec(validation_size=600, seed=opts["seed"]))
        return train, test, "gaussians"
    train, test, corpus = resolve_dataset(opts["data_dir"])
    if name not in ("auto", corpus):
        raise ConfigError(f"requested dataset {name!r} but resolved corpus is {corpus!r}")
    return train, test, corpus


def _maybe_subset(ds: LabeledDataset, size: int | None, seed: int) -> LabeledDataset:
    if size is None or size >= len(ds):
        return ds
    pick = substream(seed, "cli/subset").choice(len(ds), size=size, replace=False)
    return ds.subset(np.sort(pick), f"{ds.name}/subset{size}")


def _load_data_for_model(opts: dict, model) -> tuple[LabeledDataset, LabeledDataset, str]:
    """Like _load_data, but 'auto' honors the model's input shape."""
    choice = opts.get("dataset", "auto")
    if choice == "auto" and model.input_shape == (2,):
        choice = "gaussians"
    return _load_data(opts | {"dataset": choice})


def _emit_json(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _write_run_sidecar(artifact_path, command: str, opts: dict) -> None:
    """Config echo next to the artifact, sufficient to re-run the command."""
    sidecar = {"command": command, "config": {k: v for k, v in opts.items()
                                              if isinstance(v, (str, int, float, bool, type(None)))}}
    with open(f"{artifact_path}.run.json", "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")


# --- subcommands -------------------------------------------------------------

TRAIN_DEFAULTS = {
    "dataset": "auto", "data_dir": None, "model": "cnn", "epochs": 5,
    "batch_size": 64, "lr": 1e-3, "optimizer": "adam", "subset": None,
    "seed": 0, "out": None,
}


def cmd_train(args) -> int:
    opts = _resolve_options(args, TRAIN_DEFAULTS)
    if not opts["out"]:
        raise ConfigError("train needs --out for the checkpoint")
    opts["data_dir"] = opts["data_dir"] or _default_data_dir()
    train, test, corpus = _load_data(opts)
    train = _maybe_subset(train, opts["subset"], opts["seed"])
    input_shape = train.images.shape[1:]
    model = create_model(opts["model"], input_shape, num_classes=10, seed=opts["seed"])
    cfg = TrainConfig(
        epochs=opts["epochs"], batch_size=opts["batch_size"],
        learning_rate=opts["lr"], optimizer=opts["optimizer"], seed=opts["seed"],
    )
    trained = train_standard(model, train, cfg)
    save_checkpoint(trained, opts["out"])
    _write_run_sidecar(opts["out"], "train", opts)
    _emit_json({
        "command": "train", "corpus": corpus, "train_size": len(train),
        "test_accuracy": accuracy(trained, test.images, test.labels),
        "checkpoint": opts["out"], "model_hash": model_fingerprint(trained),
        "config": opts,
    })
    return 0


TUP_DEFAULTS = {
    "dataset": "auto", "data_dir": None, "model": None, "target": 0, "eta": 0.8, "delta": 0.1,
    "k": None, "x_size": 100, "max_passes": 10, "solver_eps": 1.0,
    "seed": 0, "out": None, "no_projection": False,
}


def cmd_tup(args) -> int:
    opts = _resolve_options(args, TUP_DEFAULTS)
    if not opts["model"] or not opts["out"]:
        raise ConfigError("tup needs --model and --out")
    opts["data_dir"] = opts["data_dir"] or _default_data_dir()
    model = load_checkpoint(opts["model"])
    train, _, corpus = _load_data_for_model(opts, model)
    x_set = sample_excluding_target(train, model, opts["target"], opts["x_size"], opts["seed"])
    cfg = TupConfig(
        target=opts["target"], eta=opts["eta"], delta=opts["delta"],
        k=opts["k"], max_passes=opts["max_passes"],
        solver=AttackConfig(epsilon=opts["solver_eps"], max_iters=30, bisect_tol=0.01,
                            seed=opts["seed"]),
        seed=opts["seed"], apply_projection=not opts["no_projection"],
    )
    result = compute_tup(model, x_set, cfg)
    save_tup(result, opts["out"], model_hash=model_fingerprint(model))
    _emit_json({
        "command": "tup", "corpus": corpus, "converged": result.converged,
        "passes_used": result.passes_used,
        "success_on_x": result.final_success_on_X,
        "linf_norm": float(np.abs(result.r).max()),
        "artifact": opts["out"], "config": opts,
    })
    return 0


ATTACK_DEFAULTS = {
    "dataset": "auto", "data_dir": None, "model": None, "method": "fgsm", "eps": 0.2, "iters": 40,
    "target": None, "targeted": False, "count": 100, "uni_delta": 0.2,
    "seed": 0, "out": None,
}


def cmd_attack(args) -> int:
    opts = _resolve_options(args, ATTACK_DEFAULTS)
    if not opts["model"] or not opts["out"]:
        raise ConfigError("attack needs --model and --out")
    opts["data_dir"] = opts["data_dir"] or _default_data_dir()
    model = load_checkpoint(opts["model"])
    _, test, corpus = _load_data_for_model(opts, model)
    sample = _maybe_subset(test, opts["count"], opts["seed"])
    cfg = AttackConfig(epsilon=opts["eps"], max_iters=opts["iters"], seed=opts["seed"])
    method = opts["method"]
    summary: dict = {"command": "attack", "method": method, "corpus": corpus,
                     "artifact": opts["out"], "config": opts}
    if method == "uni":
        try:
            res = universal_untargeted(model, sample, eta=opts["eps"],
                                       delta=opts["uni_delta"], cfg=cfg)
        except BudgetExceededError as exc:
            # persist the best-effort perturbation before failing
            save_perturbation(exc.best_delta, opts["out"],
                              {"method": "uni", "fooling_rate": exc.best_rate})
            raise
        save_perturbation(res.delta, opts["out"], {"method": "uni"})
        summary["fooling_target"] = 1.0 - opts["uni_delta"]
    elif method in ("fgsm", "pgd"):
        targeted = bool(opts["targeted"])
        if targeted and opts["target"] is None:
            raise ConfigError("targeted attack needs --target")
        ref = opts["target"] if targeted else sample.labels
        attack = fgsm if method == "fgsm" else pgd
        res = attack(model, sample.images, ref, targeted=targeted, cfg=cfg)
        arrayio.save(opts["out"], {"delta": res.delta}, "perturbation",
                     {"method": method, "epsilon": opts["eps"]})
        summary["success_rate"] = float(np.mean(res.success))
    elif method == "minimal":
        if opts["target"] is None:
            raise ConfigError("minimal attack needs --target")
        deltas = np.zeros_like(sample.images)
        hits = 0
        for i in range(len(sample)):
            try:
                res = minimal_targeted(model, sample.images[i], opts["target"], cfg)
                deltas[i] = res.delta
                hits += 1
            except RegionAdvError:
                continue
        arrayio.save(opts["out"], {"delta": deltas}, "perturbation",
                     {"method": "minimal", "target": opts["target"]})
        summary["success_rate"] = hits / len(sample)
    else:
        raise ConfigError(f"unknown attack method {method!r}")
    _write_run_sidecar(opts["out"], "attack", opts)
    _emit_json(summary)
    return 0


RAT_DEFAULTS = {
    "dataset": "auto", "data_dir": None, "model": None, "tup": None, "target": 0, "epochs": 10,
    "batch_size": 64, "lr": 1e-3, "subset": None, "seed": 0, "out": None,
    "eta": 0.8, "delta": 0.1, "tup_subset": 1000,
}


def cmd_rat(args) -> int:
    opts = _resolve_options(args, RAT_DEFAULTS)
    if not opts["model"] or not opts["out"]:
        raise ConfigError("rat needs --model and --out")
    opts["data_dir"] = opts["data_dir"] or _default_data_dir()
    model = load_checkpoint(opts["model"])
    train, test, corpus = _load_data_for_model(opts, model)
    train = _maybe_subset(train, opts["subset"], opts["seed"])
    perturbation = None
    tup_hash = None
    if opts["tup"]:
        perturbation = load_perturbation(opts["tup"])
        with open(opts["tup"], "rb") as f:
            tup_hash = hashlib.sha256(f.read()).hexdigest()
    cfg = RatConfig(
        target=opts["target"], perturbation=perturbation,
        tup=None if perturbation is not None else TupConfig(
            target=opts["target"], eta=opts["eta"], delta=opts["delta"], seed=opts["seed"],
        ),
        tup_subset=opts["tup_subset"], epochs=opts["epochs"],
        batch_size=opts["batch_size"], learning_rate=opts["lr"], seed=opts["seed"],
    )
    partition = partition_by_prediction(model, train, opts["target"], opts["seed"])
    retrained = rat_train(model, train, cfg)
    save_checkpoint(retrained, opts["out"])
    _write_run_sidecar(opts["out"], "rat", opts)
    _emit_json({
        "command": "rat", "corpus": corpus,
        "partition_sizes": dict(zip(("target", "perturbed", "clean"), partition.sizes)),
        "tup_hash": tup_hash,
        "clean_test_accuracy": accuracy(retrained, test.images, test.labels),
        "checkpoint": opts["out"], "model_hash": model_fingerprint(retrained),
        "config": opts,
    })
    return 0


EVAL_DEFAULTS = {
    "dataset": "auto", "data_dir": None, "model": None, "testset": "test", "attacks": "identity",
    "tup": None, "uni": None, "eps": 0.2, "iters": 40, "target": None,
    "subset": None, "seed": 0, "report": None, "format": "json",
    "experiment": "eval",
}


def cmd_eval(args) -> int:
    opts = _resolve_options(args, EVAL_DEFAULTS)
    if not opts["model"] or not opts["report"]:
        raise ConfigError("eval needs --model and --report")
    opts["data_dir"] = opts["data_dir"] or _default_data_dir()
    model = load_checkpoint(opts["model"])
    train, test, corpus = _load_data_for_model(opts, model)
    ds = train if opts["testset"] == "train" else test
    ds = _maybe_subset(ds, opts["subset"], opts["seed"])
    names = [a.strip() for a in opts["attacks"].split(",") if a.strip()]
    values = []
    for name in names:
        spec_kwargs = {"kind": name, "epsilon": opts["eps"], "max_iters": opts["iters"],
                       "seed": opts["seed"]}
        if name == "tup":
            if not opts["tup"]:
                raise ConfigError("eval over tup needs --tup (precomputed perturbation)")
            spec_kwargs["perturbation"] = load_perturbation(opts["tup"])
        if name == "uni":
            if not opts["uni"]:
                raise ConfigError("eval over uni needs --uni (precomputed perturbation)")
            spec_kwargs["perturbation"] = load_perturbation(opts["uni"])
        if name == "minimal":
            if opts["target"] is None:
                raise ConfigError("eval over minimal needs --target")
            spec_kwargs["target"] = opts["target"]
        values.append(accuracy_under_attack(model, ds, AttackSpec(**spec_kwargs)))
    report = EvalReport(
        experiment_id=f"{opts['experiment']}-{opts['seed']}",
        config=opts,
        provenance={"model_hash": model_fingerprint(model), "corpus": corpus,
                    "testset_size": len(ds), "seed": opts["seed"]},
    )
    report.add_table(table_from_matrix(
        "accuracy-under-attack", "rate", [values], len(ds), rows=["accuracy"], cols=names,
    ))
    if "tup" in names and opts["target"] is not None:
        rate = targeted_success(model, ds, load_perturbation(opts["tup"]), opts["target"])
        report.add_table(table_from_matrix(
            "targeted-success", "rate", [[rate]], len(ds),
            rows=["tup"], cols=[str(opts["target"])],
        ))
    paths = emit_report(report, _report_path(opts), opts["format"])
    _emit_json({"command": "eval", "corpus": corpus, "report_files": paths,
                "accuracy": dict(zip(names, values)), "config": opts})
    return 0


def _report_path(opts: dict) -> str:
    base = opts["report"]
    root, ext = os.path.splitext(base)
    if ext:
        return base
    return f"{root}-{opts['seed']}.{ 'json' if opts['format'] == 'json' else 'csv'}"


SWEEP_DEFAULTS = {
    "dataset": "auto", "data_dir": None, "model": None, "kind": "k", "values": None,
    "x_size": 100, "trials": 3, "target": 0, "eta": 0.8, "delta": 0.1,
    "max_passes": 5, "val_size": 500, "seed": 0, "report": None,
    "format": "json", "experiment": "sweep",
}


def cmd_sweep(args) -> int:
    opts = _resolve_options(args, SWEEP_DEFAULTS)
    if not opts["model"] or not opts["report"] or not opts["values"]:
        raise ConfigError("sweep needs --model, --values and --report")
    opts["data_dir"] = opts["data_dir"] or _default_data_dir()
    model = load_checkpoint(opts["model"])
    train, test, corpus = _load_data_for_model(opts, model)
    values = [float(v) for v in str(opts["values"]).split(",") if v]
    base = TupConfig(
        target=opts["target"], eta=opts["eta"], delta=opts["delta"],
        max_passes=opts["max_passes"],
        solver=AttackConfig(epsilon=1.0, max_iters=30, bisect_tol=0.01, seed=opts["seed"]),
        seed=opts["seed"],
    )
    validation = _maybe_subset(test, opts["val_size"], opts["seed"])
    if opts["kind"] == "xsize":
        series = size_of_x_sweep(model, train, validation,
                                 [int(v) for v in values], opts["trials"], base,
                                 seed=opts["seed"])
        cols = [str(s["size"]) for s in series]
        rates = [[s["mean_success"] for s in series]]
        counts = [[len(s["rates"]) for s in series]]
    else:
        x_set = sample_excluding_target(train, model, opts["target"], opts["x_size"],
                                        opts["seed"])
        series = param_sweep(model, x_set, validation, opts["kind"], values, base)
        cols = [str(s["value"]) for s in series]
        rates = [[s["success_on_val"] for s in series]]
        counts = [[len(validation)] * len(series)]
    report = EvalReport(
        experiment_id=f"{opts['experiment']}-{opts['kind']}-{opts['seed']}",
        config=opts,
        provenance={"model_hash": model_fingerprint(model), "corpus": corpus,
                    "seed": opts["seed"]},
    )
    report.add_table(table_from_matrix(
        f"{opts['kind']}-sweep", "rate", rates, counts, rows=["success"], cols=cols,
    ))
    paths = emit_report(report, _report_path(opts), opts["format"])
    _emit_json({"command": "sweep", "kind": opts["kind"], "report_files": paths,
                "series": series, "config": opts})
    return 0


# --- parser ------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; explicit flags win")
    p.add_argument("--dataset", choices=["auto", "mnist", "synth-digits", "gaussians"])
    p.add_argument("--data-dir", dest="data_dir",
                   help=f"dataset directory (default ${DATA_DIR_ENV} or ./data)")
    p.add_argument("--seed", type=int)
    p.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regionadv",
        description="Universal targeted perturbations and region adversarial training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a classifier")
    _add_common(p)
    p.add_argument("--model", choices=["mlp", "cnn"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--optimizer", choices=["adam", "sgd-momentum"])
    p.add_argument("--subset", type=int, help="train on a seeded subset of this size")
    p.add_argument("--out", help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tup", help="compute a targeted universal perturbation")
    _add_common(p)
    p.add_argument("--model", help="checkpoint to attack")
    p.add_argument("--target", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--x-size", dest="x_size", type=int)
    p.add_argument("--max-passes", dest="max_passes", type=int)
    p.add_argument("--solver-eps", dest="solver_eps", type=float)
    p.add_argument("--no-projection", dest="no_projection", action="store_const", const=True)
    p.add_argument("--out", help="perturbation artifact path")
    p.set_defaults(func=cmd_tup)

    p = sub.add_parser("attack", help="run a per-sample or universal baseline attack")
    _add_common(p)
    p.add_argument("--method", choices=["fgsm", "pgd", "minimal", "uni"])
    p.add_argument("--model")
    p.add_argument("--eps", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--target", type=int)
    p.add_argument("--targeted", action="store_const", const=True)
    p.add_argument("--count", type=int, help="number of test points to attack")
    p.add_argument("--uni-delta", dest="uni_delta", type=float,
                   help="allowed failure fraction for the universal baseline")
    p.add_argument("--out")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("rat", help="region adversarial retraining")
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--tup", help="precomputed perturbation artifact")
    p.add_argument("--target", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--subset", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--tup-subset", dest="tup_subset", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rat)

    p = sub.add_parser("eval", help="accuracy under attacks, reported to file")
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--testset", choices=["test", "train"])
    p.add_argument("--attacks", help="comma list: identity,tup,uni,fgsm,pgd,minimal")
    p.add_argument("--tup", help="perturbation artifact for the tup attack")
    p.add_argument("--uni", help="perturbation artifact for the uni attack")
    p.add_argument("--eps", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--target", type=int)
    p.add_argument("--subset", type=int)
    p.add_argument("--report", help="report path or stem")
    p.add_argument("--format", choices=["json", "csv"])
    p.add_argument("--experiment")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="k / eta / working-set-size sweeps")
    _add_common(p)
    p.add_argument("--kind", choices=["k", "eta", "xsize"])
    p.add_argument("--values", help="comma-separated values")
    p.add_argument("--model")
    p.add_argument("--x-size", dest="x_size", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--target", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--max-passes", dest="max_passes", type=int)
    p.add_argument("--val-size", dest="val_size", type=int)
    p.add_argument("--report")
    p.add_argument("--format", choices=["json", "csv"])
    p.add_argument("--experiment")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except RegionAdvError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)
    except FileNotFoundError as exc:
        print(f"error[artifact-not-found]: {exc}", file=sys.stderr)
        return EXIT_CODES["artifact-not-found"]


if __name__ == "__main__":
    sys.exit(main())
