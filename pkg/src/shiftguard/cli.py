"""Command-line entry point: ``shiftguard <command> ...``.

Every command reads JSON configs, takes its randomness from explicit
seeds, exits 0 on success and prints ``error: [stage] ...`` with a
nonzero status on failure.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import calibration as cal
from .data import (
    DEFAULT_FRACTIONS,
    apply_standardization,
    generate_synthetic,
    load_features,
    save_features,
    split,
    standardize,
)
from .errors import ShiftGuardError, StageError, ValidationError
from .harness import (
    ExperimentSpec,
    emit_report,
    load_report,
    run_experiment,
    run_matrix,
)
from .models import (
    MlpConfig,
    PriorNetConfig,
    cw_batch,
    load_model,
    save_model,
    train_ensemble,
    train_mlp,
    train_priornet,
    train_stumps,
)

log = logging.getLogger("shiftguard")

EXIT_FAILURE = 2


def _read_json(path):
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _load_data(path):
    fmt = "jsonl" if str(path).endswith(".jsonl") else "csv"
    return load_features(path, fmt)


def _staged(stage, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, exc) from exc


def _split_and_scale(path, seed, fractions):
    data = _load_data(path)
    data = split(data, fractions, seed=seed)
    return data, standardize(data)


def cmd_gen(args):
    ds = _staged("data", generate_synthetic, args.n, args.d, args.sep, args.seed)
    _staged("write", save_features, ds, args.out)
    log.info("wrote %d rows to %s", len(ds), args.out)


def _train(kind, cfg, raw, std):
    Xs, ys = std.rows("train")
    Xr, yr = raw.rows("train")
    seed = cfg.pop("seed", 0)
    if kind == "stumps":
        return train_stumps(Xr, yr, cfg.get("rounds", 100), cfg.get("learning_rate", 0.1))
    if kind in ("mlp", "ensemble"):
        m = cfg.pop("m", 10)
        mlp_cfg = MlpConfig(**{"seed": seed, **cfg})
        return train_mlp(Xs, ys, mlp_cfg) if kind == "mlp" else train_ensemble(Xs, ys, mlp_cfg, m, seed)
    attack_points = cfg.pop("ood_attack_points", 100)
    noise_points = cfg.pop("ood_noise_points", 400)
    attacker_cfg = MlpConfig(**{"seed": seed, **cfg.pop("attacker", {})})
    pn_cfg = PriorNetConfig(**{"seed": seed, **cfg})
    ood = None
    if pn_cfg.lambda_weight > 0:
        rng = np.random.default_rng([seed, 7])
        attacker = train_mlp(Xs, ys, attacker_cfg)
        idx = rng.choice(len(Xs), size=min(attack_points, len(Xs)), replace=False)
        parts = [np.array([r.x_adv for r in cw_batch(attacker, Xs[idx], c=2.0, steps=100)])]
        box = 2.0 * np.abs(Xs).max(axis=0)
        parts.append(rng.uniform(-box, box, size=(noise_points, Xs.shape[1])))
        ood = np.vstack(parts)
    return train_priornet(Xs, ys, ood, pn_cfg)


def cmd_train(args):
    cfg = _staged("config", _read_json, args.config)
    split_seed = cfg.pop("split_seed", 0)
    fractions = tuple(cfg.pop("fractions", DEFAULT_FRACTIONS))
    raw, std = _staged("data", _split_and_scale, args.data, split_seed, fractions)
    model = _staged("train", _train, args.model, dict(cfg), raw, std)
    mean, sd = std.standardization
    extra = {
        "split_seed": split_seed,
        "fractions": list(fractions),
        "standardization": {"mean": mean.tolist(), "std": sd.tolist()},
    }
    _staged("write", save_model, model, args.out, extra)
    log.info("trained %s model written to %s", args.model, args.out)


def _calibration_outputs(model, doc, data_path):
    raw = split(_load_data(data_path), tuple(doc.get("fractions", DEFAULT_FRACTIONS)),
                seed=doc.get("split_seed", 0))
    X, y = raw.rows("calibration")
    kind = doc["model"]["kind"]
    if kind == "stumps":
        return kind, model.score(X), y
    st = doc["standardization"]
    Xs = apply_standardization(X, (np.array(st["mean"]), np.array(st["std"])))
    if kind == "ensemble":
        return kind, model.member_logits(Xs).mean(axis=0), y
    if kind == "priornet":
        return kind, np.log(model.alphas(Xs).alphas), y
    return kind, model.logits(Xs), y


def cmd_calibrate(args):
    model, doc = _staged("load", load_model, args.model)
    kind, out, y = _staged("predict", _calibration_outputs, model, doc, args.data)
    if args.method == "isotonic":
        if kind != "stumps":
            raise StageError("calibrate", ValidationError("isotonic calibration applies to the stumps model"))
        fitted = _staged("calibrate", cal.fit_isotonic, out, y, split_id="calibration")
    else:
        if kind == "stumps":
            raise StageError("calibrate", ValidationError("temperature scaling needs a neural model"))
        fitted = _staged("calibrate", cal.fit_temperature, out, y, split_id="calibration")
    _staged("write", _write_json, fitted.to_dict(), args.out)


def cmd_run(args):
    spec = _staged("config", lambda p: ExperimentSpec.from_dict(_read_json(p)), args.spec)
    report = run_experiment(spec)
    _staged("write", emit_report, report, args.out, "json")


def cmd_matrix(args):
    spec_dir = Path(args.specs)
    paths = sorted(spec_dir.glob("*.json"))
    if not paths:
        raise StageError("config", ValidationError(f"no *.json specs in {spec_dir}"))
    specs = [_staged("config", lambda p: ExperimentSpec.from_dict(_read_json(p)), p) for p in paths]
    result = run_matrix(specs, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path, report in zip(paths, result.reports):
        if report is not None:
            emit_report(report, out / path.name, "json")
    if result.table:
        with open(out / "comparison.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(result.table[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(result.table)
    for i, msg in sorted(result.errors.items()):
        print(f"error: {paths[i].name}: {msg}", file=sys.stderr)
    if result.errors:
        raise StageError("matrix", RuntimeError(f"{len(result.errors)} of {len(paths)} experiments failed"))


def cmd_sweep(args):
    report = _staged("load", load_report, args.report)
    _staged("write", emit_report, report, args.csv, "csv")


def build_parser():
    p = argparse.ArgumentParser(prog="shiftguard", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic two-class dataset as CSV")
    g.add_argument("--n", type=int, default=3000)
    g.add_argument("--d", type=int, default=10)
    g.add_argument("--sep", type=float, default=2.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train one base model on the train split")
    t.add_argument("--model", choices=("mlp", "ensemble", "priornet", "stumps"), required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--config", help="JSON with model hyperparameters, seed and split_seed")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("calibrate", help="fit a calibration map on the calibration split")
    c.add_argument("--model", required=True)
    c.add_argument("--method", choices=("isotonic", "temperature"), required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_calibrate)

    r = sub.add_parser("run", help="run one experiment spec end to end")
    r.add_argument("--spec", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("matrix", help="run every spec in a directory")
    m.add_argument("--specs", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--workers", type=int, default=1)
    m.set_defaults(func=cmd_matrix)

    s = sub.add_parser("sweep", help="export a report's threshold sweep as CSV")
    s.add_argument("--report", required=True)
    s.add_argument("--csv", required=True)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (ShiftGuardError, OSError, ValueError) as exc:
        print(f"error: [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return 0


if __name__ == "__main__":
    sys.exit(main())
