"""Command-line driver: ``tapgrbm <command> [flags]``.

Every run writes into one output directory: a ``manifest.json`` holding the
fully resolved configuration, then the command's CSV/JSON outputs and, for
training commands, model files.  ``tapgrbm rerun manifest.json --out DIR``
replays a run; with ``--check`` it also compares the SHA-256 of every output
against the original.

Exit codes: 0 success, 1 reproducibility mismatch, 2 usage or invalid input,
3 data or model I/O failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from .adatap import AdaTapSettings, compare_with_tap
from .data_io import load_dataset
from .dbm import DEFAULT_PRETRAIN_EPOCHS, DEFAULT_PRETRAIN_GAMMA, pretrain_greedy, train_dbm_joint
from .denoise import corrupt_bsc, knn_denoise, mcc, ope_denoise, tap_denoise
from .errors import DataFormatError, InputError, ModelFileError, NumericalError
from .likelihood import landscape_report, tap_log_likelihood
from .model import MOMENT_CLAMP, GrbmModel, init_model, load_model, save_model
from .tap import TapSettings, export_solutions, random_inits
from .training import TrainConfig, format_record, train_epochs
from .units import Family, UnitParams

log = logging.getLogger("tapgrbm")

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL = 0, 1, 2, 3, 4
THREADS_ENV = "TAPGRBM_THREADS"
FAMILIES = [f.value for f in Family]
# outputs that legitimately differ between otherwise identical runs
VOLATILE = {"manifest.json", "timings.csv"}
METRIC_FIELDS = ["epoch", "ll_per_unit", "nll_per_unit", "mean_fe", "n_unique", "batches", "skipped"]


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _bounds(text):
    vals = _floats(text)
    if len(vals) != 2 or not vals[0] < vals[1]:
        raise argparse.ArgumentTypeError("bounds must be 'lo,hi' with lo < hi")
    return vals


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def tap_settings(args):
    return TapSettings(max_iters=args.max_iters, tolerance=args.tol, damping=args.damping)


def train_config(args, **overrides):
    values = dict(
        gamma=args.lr,
        epsilon=args.l2,
        eta=args.momentum,
        batch_size=args.batch,
        n_solutions=args.k,
        epochs=args.epochs,
        seed=args.seed,
        tap=tap_settings(args),
        monitor_size=args.monitor_size,
        monitor=not args.no_monitor,
        gamma_final=args.lr_final,
    )
    values.update(overrides)
    return TrainConfig(**values)


def load_data(args, path=None, family=None):
    mode = args.preprocess
    if mode == "auto":
        mode = "binarize" if (family or getattr(args, "vis_prior", "binary")) == "binary" else "normalize01"
    ds = load_dataset(path or args.data, mode=mode, limit=args.limit)
    log.info("loaded %d rows x %d columns from %s", ds.X.shape[0], ds.X.shape[1], ds.meta["path"])
    return ds.X


class Run:
    """Output directory bookkeeping for one command invocation."""

    def __init__(self, args):
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.args = args
        self.outputs = []
        self.timings = []

    def path(self, name):
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(name)
        return p

    def config(self):
        cfg = {k: v for k, v in vars(self.args).items() if k not in ("func", "out")}
        for key in ("data", "model", "train_data"):
            if cfg.get(key):
                cfg[key] = str(Path(cfg[key]).resolve())
        return cfg

    def inputs(self):
        found = {}
        for key in ("data", "model", "train_data"):
            value = getattr(self.args, key, None)
            if value and Path(value).is_file():
                found[key] = {"path": str(value), "sha256": sha256(value)}
        return found

    def write_manifest(self, status="running"):
        if self.timings:
            write_csv(self.out / "timings.csv", ["stage", "epoch", "wall_time"], self.timings)
        manifest = {
            "tool": "tapgrbm",
            "version": __version__,
            "command": self.args.command,
            "seed": getattr(self.args, "seed", None),
            "config": self.config(),
            "inputs": self.inputs(),
            "status": status,
            "outputs": {n: sha256(self.out / n) for n in sorted(set(self.outputs)) if (self.out / n).exists()},
        }
        write_json(self.out / "manifest.json", manifest)


def _metric_rows(records):
    return [[rec.get(k, "") for k in METRIC_FIELDS] for rec in records]


def _training_callbacks(run, stage, every, ckpt_dir="checkpoints"):
    def on_epoch(epoch, model, rec):
        run.timings.append([stage, epoch, rec.get("wall_time", 0.0)])
        log.info("%s %s", stage, format_record(rec))
        if every and epoch > 0 and epoch % every == 0:
            save_model(model, run.path(f"{ckpt_dir}/{stage}-epoch-{epoch:04d}.tapm"))

    return [on_epoch]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _train_rbm(run, args, X, n_hidden, stage="train"):
    model = init_model(
        (X.shape[1], n_hidden),
        args.vis_prior,
        args.hid_prior,
        X,
        sigma=args.sigma,
        seed=args.seed,
        bounds=tuple(args.vis_bounds),
        hid_bounds=tuple(args.hid_bounds),
    )
    records = []
    if args.epochs > 0:
        _, records = train_epochs(model, X, train_config(args), _training_callbacks(run, stage, args.checkpoint_every))
    return model, records


def cmd_train(args):
    run = Run(args)
    run.write_manifest()
    X = load_data(args)
    model, records = _train_rbm(run, args, X, args.nh)
    save_model(model, run.path("model.tapm"))
    if records:
        write_csv(run.path("metrics.csv"), METRIC_FIELDS, _metric_rows(records))
    run.write_manifest("done")
    return EXIT_OK


def cmd_eval(args):
    run = Run(args)
    run.write_manifest()
    model = load_model(args.model)
    X = load_data(args, family=model.layers[0].family.value)
    settings = tap_settings(args)
    inits = X[: args.k] if args.k else X
    report = landscape_report(model, inits, settings, args.dedup_tol)
    if report.n_unique == 0:
        raise NumericalError("no TAP run converged; cannot estimate the partition function")
    ll = tap_log_likelihood(model, X, report.solutions, settings)
    per_unit = ll / sum(model.sizes)
    write_csv(
        run.path("per_row.csv"), ["row", "log_likelihood", "ll_per_unit"], [[i, float(a), float(b)] for i, (a, b) in enumerate(zip(ll, per_unit))]
    )
    ok = np.isfinite(ll)
    write_csv(
        run.path("summary.csv"),
        ["n_rows", "n_scored", "mean_ll", "mean_ll_per_unit", "n_unique", "mean_free_energy"],
        [[len(ll), int(ok.sum()), float(np.mean(ll[ok])), float(np.mean(per_unit[ok])), report.n_unique, report.mean_free_energy]],
    )
    run.write_manifest("done")
    return EXIT_OK


def cmd_landscape(args):
    run = Run(args)
    run.write_manifest()
    model = load_model(args.model)
    if args.data:
        inits = load_data(args, family=model.layers[0].family.value)[: args.k]
    else:
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, 1]))
        inits = random_inits(model.layers[0], args.k, rng)
    rows = []
    for tol in args.dedup_tol:
        report = landscape_report(model, inits, tap_settings(args), tol)
        rows.append([tol, report.n_initializations, report.n_converged, report.n_unique, report.mean_free_energy])
    write_csv(run.path("counts.csv"), ["dedup_tol", "n_initializations", "n_converged", "n_unique", "mean_free_energy"], rows)
    # the first tolerance is the reference one for detailed outputs
    report = landscape_report(model, inits, tap_settings(args), args.dedup_tol[0])
    write_json(run.path("landscape.json"), report.to_dict())
    write_csv(run.path("free_energies.csv"), ["solution", "free_energy"], [[i, f] for i, f in enumerate(report.free_energies)])
    if report.solutions:
        export_solutions(report.solutions, run.path("solutions.txt"))
    run.write_manifest("done")
    return EXIT_OK


def cmd_denoise(args):
    run = Run(args)
    run.write_manifest()
    model = load_model(args.model)
    if model.depth != 1 or model.layers[0].family is not Family.BINARY:
        raise InputError("denoising needs an RBM with binary visible units")
    model = model.as_grbm()
    X = load_data(args, family="binary")
    exemplars = None
    if args.train_data:
        exemplars = load_data(args, args.train_data, family="binary")
        m = np.clip(exemplars.mean(axis=0), MOMENT_CLAMP, 1 - MOMENT_CLAMP)
    else:
        m = 1.0 / (1.0 + np.exp(-model.layers[0].U))
    if "knn" in args.methods and exemplars is None:
        raise InputError("the knn method needs --train-data exemplars")
    settings = tap_settings(args)
    curve, per_sample = [], []
    for j, p in enumerate(args.p_grid):
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, j]))
        Y = corrupt_bsc(X, p, rng=rng)
        for method in args.methods:
            if method == "ope":
                est = ope_denoise(Y, m, p).estimate
            elif method == "knn":
                est = knn_denoise(Y, exemplars).estimate
            else:
                est = tap_denoise(model, Y, p, settings).estimate
            scores = [mcc(e, x) for e, x in zip(est, X)]
            per_sample += [[p, method, i, s] for i, s in enumerate(scores)]
            curve.append([p, method, float(np.mean(scores)), float(np.std(scores)), len(scores)])
            log.info("p=%g %s mean MCC %.4f", p, method, curve[-1][2])
    write_csv(run.path("mcc_vs_p.csv"), ["p", "method", "mean_mcc", "std_mcc", "n_rows"], curve)
    write_csv(run.path("per_sample.csv"), ["p", "method", "row", "mcc"], per_sample)
    run.write_manifest("done")
    return EXIT_OK


def cmd_adatap_compare(args):
    run = Run(args)
    run.write_manifest()
    if args.model:
        model = load_model(args.model).as_grbm()
    else:
        rng = np.random.default_rng(args.seed)
        n_v, n_h = args.nv, args.nh
        W = rng.normal(0.0, args.scale / np.sqrt(n_v + n_h), (n_v, n_h))
        model = GrbmModel(W, UnitParams.binary(rng.normal(0, 1, n_v)), UnitParams.binary(rng.normal(0, 1, n_h)))
    ada = AdaTapSettings(max_iters=args.max_iters, tolerance=args.ada_tol, damping=args.ada_damping)
    out = compare_with_tap(model, TapSettings(max_iters=args.max_iters, tolerance=args.tol, damping=args.damping), ada, args.repeats)
    timing = {k: out[k] for k in out if "seconds" in k}
    stable = {k: v for k, v in out.items() if k not in timing}
    write_json(run.path("comparison.json"), stable)
    run.timings += [[k, 0, v] for k, v in timing.items()]
    ratio = timing["adatap_seconds_per_iteration"] / max(timing["tap_seconds_per_iteration"], 1e-300)
    log.info("max |a diff| %.3g, adaTAP/TAP time per iteration %.3g", out["max_diff_a"], ratio)
    print(json.dumps({**out, "time_ratio": ratio}, indent=2))
    run.write_manifest("done")
    return EXIT_OK


def cmd_dbm(args):
    run = Run(args)
    run.write_manifest()
    X = load_data(args)
    hidden = args.layers
    if len(hidden) == 1:
        # a single hidden layer is plain RBM training
        model, records = _train_rbm(run, args, X, hidden[0])
        save_model(model, run.path("model.tapm"))
        if records:
            write_csv(run.path("metrics.csv"), METRIC_FIELDS, _metric_rows(records))
        run.write_manifest("done")
        return EXIT_OK
    pre_cfg = train_config(args, gamma=args.pretrain_lr, gamma_final=None, epochs=args.pretrain_epochs)
    stage = {"layer": 0, "last": None, "cb": None}

    def pre_callback(epoch, model, rec):
        # pretrain_greedy calls back for every layer in turn; epochs restart per layer
        if stage["last"] is None or epoch <= stage["last"]:
            stage["layer"] += 1
            stage["cb"] = _training_callbacks(run, f"pretrain-{stage['layer']}", args.checkpoint_every)[0]
        stage["last"] = epoch
        stage["cb"](epoch, model, rec)

    dbm, logs = pretrain_greedy(
        [X.shape[1]] + hidden, X, pre_cfg, args.vis_prior, args.hid_prior, args.propagation, args.sigma, [pre_callback]
    )
    for l, records in enumerate(logs, start=1):
        if records:
            write_csv(run.path(f"pretrain_metrics_layer{l}.csv"), METRIC_FIELDS, _metric_rows(records))
    save_model(dbm, run.path("pretrained.tapm"))
    records = []
    if args.epochs > 0:
        _, records = train_dbm_joint(dbm, X, train_config(args), args.joint_momentum, _training_callbacks(run, "joint", args.checkpoint_every))
        write_csv(run.path("metrics.csv"), METRIC_FIELDS, _metric_rows(records))
    save_model(dbm, run.path("model.tapm"))
    run.write_manifest("done")
    return EXIT_OK


def cmd_rerun(args):
    manifest = json.loads(Path(args.manifest).read_text())
    if manifest.get("tool") != "tapgrbm" or "config" not in manifest:
        raise DataFormatError(f"{args.manifest}: not a tapgrbm manifest")
    if manifest.get("version") != __version__:
        log.warning("manifest written by version %s, running %s", manifest.get("version"), __version__)
    config = dict(manifest["config"])
    if config.get("command") not in COMMANDS:
        raise DataFormatError(f"{args.manifest}: unknown command {config.get('command')!r}")
    replay = argparse.Namespace(**config, out=args.out)
    status = COMMANDS[replay.command](replay)
    if status != EXIT_OK or not args.check:
        return status
    new = json.loads((Path(args.out) / "manifest.json").read_text())["outputs"]
    old = manifest.get("outputs", {})
    diffs = sorted(n for n in set(old) | set(new) if n not in VOLATILE and old.get(n) != new.get(n))
    for name in diffs:
        print(f"mismatch: {name}", file=sys.stderr)
    if not diffs:
        print(f"reproduced {len(old)} outputs bit-identically")
    return EXIT_MISMATCH if diffs else EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common(p, data_required=True):
    p.add_argument("--out", required=True, help="output directory for this run")
    p.add_argument("--seed", type=int, default=0)
    if data_required is not None:
        p.add_argument("--data", required=data_required, help="IDX or delimited text file")
    p.add_argument("--limit", type=int, default=None, help="use only the first N rows")
    p.add_argument("--preprocess", choices=["auto", "binarize", "normalize01"], default="auto")


def _add_tap(p):
    p.add_argument("--damping", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=1e-8, help="TAP convergence threshold on the MSE of updates")
    p.add_argument("--max-iters", type=int, default=1000)


def _add_training(p):
    p.add_argument("--vis-prior", choices=FAMILIES, default="binary")
    p.add_argument("--hid-prior", choices=FAMILIES, default="binary")
    p.add_argument("--vis-bounds", type=_bounds, default=[0.0, 1.0])
    p.add_argument("--hid-bounds", type=_bounds, default=[0.0, 1.0])
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--lr-final", type=float, default=None, help="decay the rate linearly to this value")
    p.add_argument("--l2", type=float, default=0.001)
    p.add_argument("--momentum", type=float, default=0.5)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--k", type=int, default=100, help="TAP solutions per update")
    p.add_argument("--sigma", type=float, default=1e-3, help="initial weight scale")
    p.add_argument("--monitor-size", type=int, default=1000)
    p.add_argument("--no-monitor", action="store_true")
    p.add_argument("--checkpoint-every", type=int, default=0)
    _add_tap(p)


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "landscape": cmd_landscape,
    "denoise": cmd_denoise,
    "adatap-compare": cmd_adatap_compare,
    "dbm": cmd_dbm,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="tapgrbm", description="Train and analyse TAP-based Boltzmann machines.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=None, help=f"cap BLAS threads (default: ${THREADS_ENV})")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an RBM")
    _add_common(p)
    _add_training(p)
    p.add_argument("--nh", type=int, default=100)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score rows with the TAP log-likelihood")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, default=100, help="data rows used as TAP initializations (0 = all)")
    p.add_argument("--dedup-tol", type=float, default=1e-4)
    _add_tap(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("landscape", help="count and export distinct TAP solutions")
    _add_common(p, data_required=False)
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, default=100, help="number of initializations")
    p.add_argument("--dedup-tol", type=_floats, default=[1e-4], help="one or more tolerances, comma-separated")
    _add_tap(p)
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("denoise", help="MCC versus flip probability for several denoisers")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--train-data", default=None, help="exemplars for knn and magnetizations for ope")
    p.add_argument("--p-grid", type=_floats, default=[0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3])
    p.add_argument("--methods", type=lambda s: s.split(","), default=["ope", "knn", "tap"])
    _add_tap(p)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("adatap-compare", help="moments and per-iteration cost of TAP versus adaptive TAP")
    _add_common(p, data_required=None)
    p.add_argument("--model", default=None)
    p.add_argument("--nv", type=int, default=10)
    p.add_argument("--nh", type=int, default=10)
    p.add_argument("--scale", type=float, default=0.1, help="weights ~ N(0, scale^2 / N)")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--ada-tol", type=float, default=1e-12)
    p.add_argument("--ada-damping", type=float, default=0.5)
    _add_tap(p)
    p.set_defaults(func=cmd_adatap_compare, tol=1e-14, max_iters=5000)

    p = sub.add_parser("dbm", help="greedy pretraining then joint training of a deep model")
    _add_common(p)
    _add_training(p)
    p.add_argument("--layers", type=_ints, required=True, help="hidden layer sizes, e.g. 500,1000")
    p.add_argument("--pretrain-epochs", type=int, default=DEFAULT_PRETRAIN_EPOCHS)
    p.add_argument("--pretrain-lr", type=float, default=DEFAULT_PRETRAIN_GAMMA)
    p.add_argument("--propagation", choices=["mean", "sample"], default="mean")
    p.add_argument("--joint-momentum", action="store_true", help="keep momentum during joint training")
    p.set_defaults(func=cmd_dbm)

    p = sub.add_parser("rerun", help="replay a run from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--check", action="store_true", help="compare output hashes with the original run")
    p.set_defaults(func=cmd_rerun)
    return parser


def _thread_limit(args):
    n = args.threads
    if n is None and os.environ.get(THREADS_ENV):
        n = int(os.environ[THREADS_ENV])
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with _thread_limit(args):
            return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataFormatError, ModelFileError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InputError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
