"""Command-line entry point.

Exit codes: 0 success, 1 a check failed, 2 usage or configuration error,
3 runtime or numerical failure.
"""
import argparse
from dataclasses import replace
import csv
import logging
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .baselines import lda_features
from .config import ConfigError, ProtocolConfig, RunConfig
from .errors import DivergenceError, NumericalError
from .evaluation import (SESSION_DEPENDENT, SESSION_TO_SESSION, AccuracyTable, ProtocolSpec,
                         emit_table, preprocess_set, run_protocol, write_report)
from .methods import LdaMethod, ProposedMethod, method_name
from .rng import derive_seed
from .signal import Condition
from .spectral import DEFAULT_BAND, band_magnitudes
from .synthgen import gen_dataset, read_dataset, write_dataset

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
log = logging.getLogger("ssvepnet")


class UsageError(Exception):
    pass


def _setup_logging(quiet, verbose=False):
    level = logging.WARNING if quiet else (logging.DEBUG if verbose else logging.INFO)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
                        force=True)


def _load_config(args):
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.jobs is not None:
        over["jobs"] = args.jobs
    if args.quiet:
        over["quiet"] = True
    cfg = replace(cfg, **over)
    if cfg.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return cfg


def _check_writable(path, is_dir=True):
    target = path if is_dir else (os.path.dirname(os.path.abspath(path)) or ".")
    try:
        os.makedirs(target, exist_ok=True)
        with tempfile.TemporaryFile(dir=target):
            pass
    except OSError as exc:
        raise UsageError(f"cannot write to {target}: {exc.strerror or exc}") from None


def _load_slice(data_dir, montage, condition):
    if not os.path.exists(os.path.join(data_dir, "manifest.json")):
        raise UsageError(f"no dataset at {data_dir}")
    _, sets = read_dataset(data_dir)
    if montage not in sets:
        raise UsageError(f"dataset has no {montage} montage")
    es = sets[montage]
    part = es.slice(condition=condition)
    if len(part) == 0:
        raise UsageError(f"dataset has no {condition} trials for {montage}")
    return es, part


def _condition(text):
    """Condition value from any capitalisation, e.g. ``standing`` or ``WALK08``."""
    for c in Condition:
        if c.value.lower() == text.strip().lower():
            return c.value
    raise ConfigError(f"unknown condition {text!r}; expected one of {[c.value for c in Condition]}")


# ------------------------------------------------------------ commands

def cmd_synth(args):
    cfg = _load_config(args)
    gen = cfg.generator
    over = {k: v for k, v in (("preset", args.preset), ("n_subjects", args.n_subjects),
                              ("trials_per_class", args.trials_per_class)) if v is not None}
    try:
        gen = replace(gen, seed=cfg.seed, **over)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _check_writable(args.out)
    ds = gen_dataset(gen)
    write_dataset(ds, args.out)
    per = gen.trials_per_class * len(gen.stim_freqs)
    print(f"wrote {len(ds.scalp)} trial pairs ({gen.n_subjects} subjects x 3 conditions x {per} trials) "
          f"to {args.out}")
    return EXIT_OK


def _write_predictions(path, subjects, labels, preds, trial_ids):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "subject_id", "label", "prediction"])
        for t, s, y, p in zip(trial_ids, subjects, labels, preds):
            w.writerow([int(t), int(s), int(y), int(p)])


def cmd_train(args):
    cfg = _load_config(args)
    condition = _condition(args.condition)
    full, part = _load_slice(args.data, args.montage, condition)
    if args.subject is not None:
        part = part.slice(subject_id=args.subject)
        if len(part) == 0:
            raise UsageError(f"subject {args.subject} has no {condition} trials")
    missing = [c for c in range(3) if not np.any(part.labels == c)]
    if missing:
        raise UsageError(f"slice is missing classes {missing}")
    _check_writable(args.model, is_dir=False)
    data = preprocess_set(part).data
    seed = derive_seed(cfg.seed, "train-cmd", args.montage, condition, args.subject)
    from . import serialize
    if args.method == "lda":
        m = LdaMethod(part.rate).fit(data, part.labels)
        serialize.save_lda(args.model, m.model, {"method": "LDA", "rate": part.rate})
    else:
        train_cfg = cfg.train if args.epochs is None else replace(cfg.train, epochs=args.epochs)
        m = ProposedMethod(part.rate, train_cfg, seed).fit(data, part.labels)
        serialize.save_proposed(args.model, m)
        loss_path = args.loss_csv or os.path.splitext(args.model)[0] + "_loss.csv"
        with open(loss_path, "w") as fh:
            fh.write("epoch,loss\n")
            for i, v in enumerate(m.losses, 1):
                fh.write(f"{i},{v!r}\n")
        log.info("loss curve written to %s", loss_path)
    if args.predictions:
        preds = m.predict(data)
        _write_predictions(args.predictions, part.subject_ids, part.labels, preds, range(len(part)))
    log.info("model written to %s", args.model)
    return EXIT_OK


def _eval_with_model(args, cfg):
    from . import serialize
    if not args.condition:
        raise UsageError("--model needs --condition")
    condition = _condition(args.condition)
    _, part = _load_slice(args.data, args.montage, condition)
    if args.subject is not None:
        part = part.slice(subject_id=args.subject)
    data = preprocess_set(part).data
    tag, _, _ = serialize.load_container(args.model)
    if tag == serialize.LDA_TAG:
        model, _ = serialize.load_lda(args.model)
        m = LdaMethod(part.rate)
        m.model = model
    else:
        m = serialize.load_proposed(args.model)
    preds = np.asarray(m.predict(data))
    os.makedirs(args.out, exist_ok=True)
    out = os.path.join(args.out, "predictions.csv")
    _write_predictions(out, part.subject_ids, part.labels, preds, range(len(part)))
    acc = float(np.mean(preds == part.labels))
    print(f"accuracy {acc:.4f} on {len(part)} trials; predictions in {out}")
    return EXIT_OK


def cmd_eval(args):
    cfg = _load_config(args)
    if args.model:
        return _eval_with_model(args, cfg)
    proto = cfg.protocol
    over = {}
    if args.protocol:
        over["kind"] = args.protocol
    if args.methods:
        over["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if args.montages:
        over["montages"] = tuple(m.strip() for m in args.montages.split(","))
    if args.speed:
        over["speeds"] = tuple(_condition(s) for s in args.speed.split(","))
    try:
        if over.get("methods"):
            over["methods"] = tuple(method_name(m) for m in over["methods"])
        proto = replace(proto, **over)
        speeds = proto.resolved_speeds()
        for sp in speeds:
            for m in proto.methods:
                ProtocolSpec(proto.kind, proto.montages[0], sp, m, cfg.seed, proto.k_folds)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    train_cfg = cfg.train if args.epochs is None else replace(cfg.train, epochs=args.epochs)
    if not os.path.exists(os.path.join(args.data, "manifest.json")):
        raise UsageError(f"no dataset at {args.data}")
    _check_writable(args.out)
    manifest, sets = read_dataset(args.data)
    tables = {}
    for montage in proto.montages:
        es = preprocess_set(sets[montage])
        subjects = sorted(int(s) for s in np.unique(es.subject_ids))
        table = AccuracyTable(subjects, speeds, list(proto.methods))
        for sp in speeds:
            for m in proto.methods:
                spec = ProtocolSpec(proto.kind, montage, sp, m, cfg.seed, proto.k_folds)
                log.info("%s %s %s %s", proto.kind, montage, sp, m)
                accs = run_protocol(es, spec, train_cfg, jobs=cfg.jobs)
                table.set_row(sp, m, accs)
        tables[montage] = table
        print(f"## {montage} ({proto.kind})\n")
        print(emit_table(table, "markdown"))
    run_config = {"config": replace(cfg, train=train_cfg, protocol=replace(proto, speeds=tuple(speeds))).to_dict(),
                  "dataset": {"generator": manifest.get("generator"),
                              "n_pairs": manifest.get("n_pairs")},
                  "version": __version__}
    # jobs only changes scheduling; keep it out of the provenance so reports compare byte for byte
    run_config["config"].pop("jobs", None)
    write_report(args.out, tables, run_config, proto.kind)
    return EXIT_OK


def cmd_gradcheck(args):
    from .nn.gradcheck import TOL, run_gradcheck

    seeds = range(args.seed or 0, (args.seed or 0) + args.n_seeds)
    try:
        report = run_gradcheck(seeds, corrupt=args.corrupt)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for path, err in report.errors.items():
        status = "ok" if err < TOL else "FAIL"
        print(f"{path:24s} {err:.3e} {status}")
    failures = report.failures()
    if failures:
        print(f"gradient check failed for: {', '.join(failures)}")
        return EXIT_CHECK
    print(f"all {len(report.errors)} gradient tensors within {TOL:g} over {len(seeds)} seeds")
    return EXIT_OK


def cmd_features_dump(args):
    condition = _condition(args.condition)
    _, part = _load_slice(args.data, args.montage, condition)
    if not 0 <= args.trial < len(part):
        raise UsageError(f"trial index must be in [0, {len(part)})")
    one = part.select([args.trial])
    data = preprocess_set(one).data[0]
    rows = []
    if args.kind == "spectral":
        mags, freqs = band_magnitudes(data, one.rate, DEFAULT_BAND)
        head = ["channel"] + [f"{f:.4f}" for f in freqs]
        rows = [[ch] + [repr(float(v)) for v in row] for ch, row in zip(one.montage.channels, mags)]
    else:
        feats = lda_features(data, one.rate)
        n_ch = one.montage.n_channels
        head = ["band", "channel", "value"]
        names = [f"{h}f{k}" for k in range(3) for h in (1, 2)]
        rows = [[names[i // n_ch], one.montage.channels[i % n_ch], repr(float(v))] for i, v in enumerate(feats)]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(head)
        w.writerows(rows)
    finally:
        if args.out:
            out.close()
    return EXIT_OK


# ------------------------------------------------------------ parser

def _condition_arg(text):
    try:
        return _condition(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default 0 or the config value)")
    common.add_argument("--jobs", type=int, default=None, help="worker processes; results do not depend on it")
    common.add_argument("--quiet", action="store_true", help="suppress log output on standard error")
    common.add_argument("--verbose", action="store_true", help="debug-level logs")
    common.add_argument("--config", help="RunConfig JSON file")

    p = argparse.ArgumentParser(prog="ssvepnet", description="SSVEP decoding from scalp and ear EEG.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--preset", choices=["noiseless", "high", "paper-like", "hard"], help="SNR preset")
    s.add_argument("--n-subjects", type=int, help="number of subjects")
    s.add_argument("--trials-per-class", type=int, help="trials per class per condition")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", parents=[common], help="train LDA or the two-stream network on one slice")
    t.add_argument("--data", required=True, help="dataset directory")
    t.add_argument("--method", required=True, choices=["lda", "proposed"], help="classifier to train")
    t.add_argument("--montage", required=True, choices=["scalp", "ear"], help="electrode montage")
    t.add_argument("--condition", required=True, type=_condition_arg, metavar="{Standing,Walk08,Walk16}",
                   help="walking condition (case-insensitive)")
    t.add_argument("--subject", type=int, help="restrict to one subject (default: all)")
    t.add_argument("--model", required=True, help="output model file")
    t.add_argument("--loss-csv", help="loss curve CSV (default: <model>_loss.csv)")
    t.add_argument("--predictions", help="also write in-memory predictions on the slice to this CSV")
    t.add_argument("--epochs", type=int, help="override the epoch count (smoke tests only)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="run a protocol and write tables and statistics")
    e.add_argument("--data", required=True, help="dataset directory")
    e.add_argument("--out", required=True, help="report directory")
    e.add_argument("--protocol", choices=[SESSION_DEPENDENT, SESSION_TO_SESSION], help="evaluation protocol")
    e.add_argument("--methods", help="comma list of cca, lda, proposed")
    e.add_argument("--montages", help="comma list of scalp, ear")
    e.add_argument("--speed", help="comma list of Standing, Walk08, Walk16")
    e.add_argument("--epochs", type=int, help="override the epoch count (smoke tests only)")
    e.add_argument("--model", help="predict with a saved model instead of running a protocol")
    e.add_argument("--montage", default="scalp", choices=["scalp", "ear"], help="montage for --model")
    e.add_argument("--condition", type=_condition_arg, metavar="{Standing,Walk08,Walk16}", help="condition for --model")
    e.add_argument("--subject", type=int, help="subject for --model")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every gradient")
    g.add_argument("--n-seeds", type=int, default=10, help="number of seeds, starting at --seed")
    g.add_argument("--corrupt", metavar="PATH",
                   help="fault injection: falsify the analytic gradient at PATH (e.g. net.lstm1.U)")
    g.set_defaults(func=cmd_gradcheck)

    f = sub.add_parser("features-dump", parents=[common], help="write one trial's features as CSV")
    f.add_argument("--data", required=True, help="dataset directory")
    f.add_argument("--montage", required=True, choices=["scalp", "ear"], help="electrode montage")
    f.add_argument("--condition", default="Standing", type=_condition_arg, metavar="{Standing,Walk08,Walk16}",
                   help="walking condition (default Standing)")
    f.add_argument("--trial", type=int, default=0, help="index within the condition")
    f.add_argument("--kind", default="spectral", choices=["spectral", "lda"], help="feature family to dump")
    f.add_argument("--out", help="CSV path (default: standard output)")
    f.set_defaults(func=cmd_features_dump)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.quiet, args.verbose)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, NumericalError, FloatingPointError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
