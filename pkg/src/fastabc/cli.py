"""Command-line interface: ``fastabc {train,predict,sweep,synth}``.

Exit codes: 0 on success, 1 on data/training errors, 2 on bad flags.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from .boost import Algorithm, TrainConfig, TrainingError, train
from .data import DataError, subsample, write_libsvm
from .model_io import (
    ModelFormatError,
    atomic_write_text,
    load_model,
    metrics_csv,
    read_metrics,
    save_metrics,
    save_model,
)
from .synthetic import make_clusters, make_slabs

log = logging.getLogger("fastabc")

THREADS_ENV = "FASTABC_THREADS"
ALGO_CHOICES = [a.cli_name for a in Algorithm]
SUMMARY_HEADER = ("algo", "J", "nu", "G", "final_test_error", "tree_fit_count")
RATIO_HEADER = ("algo", "J", "nu", "G", "plain_algo", "plain_test_error", "abc_test_error", "ratio")
RUN_ERRORS = (DataError, TrainingError, ModelFormatError, OSError, ValueError)


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _csv_list(kind):
    def parse(text):
        try:
            values = [kind(t) for t in text.split(",") if t.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid list {text!r}") from None
        if not values:
            raise argparse.ArgumentTypeError("empty list")
        return values
    return parse


def _add_data_flags(p):
    p.add_argument("--format", choices=["libsvm", "csv"], default="libsvm")
    p.add_argument("--label-column", type=int, default=0,
                   help="label column for CSV input (default 0)")


def _load(path, args, **kwargs):
    if args.format == "csv":
        return data_mod.parse_csv(path, args.label_column, **kwargs)
    return data_mod.parse_libsvm(path, **kwargs)


def _load_test(path, train_set, args):
    kwargs = {"classes": train_set.class_labels, "n_classes": train_set.n_classes,
              "n_features": train_set.n_features}
    if args.format == "libsvm":
        kwargs["zero_based"] = train_set.index_base == 0
    return _load(path, args, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fastabc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model")
    p.set_defaults(handler=cmd_train, subparser=p)
    p.add_argument("--algo", choices=ALGO_CHOICES, required=True)
    p.add_argument("--train", required=True, help="training data path or - for stdin")
    _add_data_flags(p)
    p.add_argument("-J", type=int, default=20, help="terminal nodes per tree (default 20)")
    p.add_argument("--nu", type=float, default=0.1, help="shrinkage (default 0.1)")
    p.add_argument("-M", type=int, default=1000, help="boosting iterations (default 1000)")
    p.add_argument("-G", type=int, default=None, help="base-class search gap, abc only (default 1)")
    p.add_argument("--test")
    p.add_argument("--model-out")
    p.add_argument("--metrics-out")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default ${THREADS_ENV} or 1)")
    p.add_argument("--early-stop-loss", type=float, default=None)
    p.add_argument("--subsample", type=int, default=None, help="train on a stratified subset")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("predict", help="score a dataset with a saved model")
    p.set_defaults(handler=cmd_predict, subparser=p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    _add_data_flags(p)
    p.add_argument("--up-to-m", type=int, default=None)
    p.add_argument("--out", default=None, help="output CSV (default stdout)")

    p = sub.add_parser("sweep", help="run a grid of training jobs")
    p.set_defaults(handler=cmd_sweep, subparser=p)
    p.add_argument("--train", required=True)
    p.add_argument("--test")
    _add_data_flags(p)
    p.add_argument("--algos", type=_csv_list(str), default=["abc-mart"])
    p.add_argument("-J", type=_csv_list(int), default=[20])
    p.add_argument("--nu", type=_csv_list(float), default=[0.1])
    p.add_argument("-G", type=_csv_list(int), default=[1])
    p.add_argument("-M", type=int, default=1000)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--subsample", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="cells run in parallel")
    p.add_argument("--max-cells", type=int, default=1000)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--early-stop-loss", type=float, default=None)

    p = sub.add_parser("synth", help="write a synthetic dataset in libsvm format")
    p.set_defaults(handler=cmd_synth, subparser=p)
    p.add_argument("kind", choices=["slabs", "clusters"])
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--features", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--centers-seed", type=int, default=0, help="clusters: geometry seed")
    p.add_argument("--spread", type=float, default=1.5, help="clusters: noise scale")
    p.add_argument("--margin", type=float, default=0.3,
                   help="slabs: gap half-width around each boundary (direction (1, 0.25))")
    p.add_argument("--out", required=True)
    return parser


# --- train -------------------------------------------------------------------

def cmd_train(args, parser) -> int:
    algo = Algorithm.parse(args.algo)
    if args.G is not None and not algo.is_abc:
        parser.error("G requires an abc algorithm")
    threads = args.threads if args.threads is not None else _default_threads()
    try:
        config = TrainConfig(algo, J=args.J, nu=args.nu, M=args.M,
                             G=1 if args.G is None else args.G,
                             early_stop_loss=args.early_stop_loss, threads=threads)
    except ValueError as exc:
        parser.error(str(exc))

    try:
        train_set = _load(args.train, args)
        if args.subsample is not None:
            train_set = subsample(train_set, args.subsample, args.seed)
        test_set = _load_test(args.test, train_set, args) if args.test else None
        ensemble = train(config, train_set, test_set)
        if args.model_out:
            save_model(ensemble, args.model_out)
        if args.metrics_out:
            save_metrics(ensemble, args.metrics_out)
    except RUN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    m = ensemble.metrics
    final_loss = m.train_loss[-1] if len(m) else float("nan")
    print(f"iterations: {ensemble.n_iterations}")
    print(f"final train loss: {final_loss!r}")
    if test_set is not None:
        final_err = m.test_error[-1] if len(m) else int(
            (ensemble.predict_classes(test_set.rows) != test_set.labels).sum())
        print(f"final test errors: {final_err} / {test_set.n_samples}")
    print(f"tree_fit_count: {ensemble.tree_fit_count}")
    return 0


# --- predict -----------------------------------------------------------------

def cmd_predict(args, parser) -> int:
    try:
        model = load_model(args.model)
        kwargs = {"classes": model.class_labels, "n_classes": model.n_classes,
                  "n_features": model.n_features}
        dataset = _load(args.data, args, **kwargs)
        F = model.decision_function(dataset.rows, args.up_to_m)
    except RUN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    predicted = np.argmax(F, axis=1)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "predicted"] + [f"score_{k}" for k in range(model.n_classes)])
    for i in range(F.shape[0]):
        writer.writerow([i, int(predicted[i])] + [repr(float(v)) for v in F[i]])
    errors = int((predicted != dataset.labels).sum())
    if args.out:
        try:
            atomic_write_text(args.out, buf.getvalue())
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(f"errors: {errors} / {dataset.n_samples}")
    else:
        sys.stdout.write(buf.getvalue())
        print(f"errors: {errors} / {dataset.n_samples}", file=sys.stderr)
    return 0


# --- sweep -------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    algo: Algorithm
    J: int
    nu: float
    G: int | None

    @property
    def name(self) -> str:
        g = "na" if self.G is None else str(self.G)
        return f"{self.algo.cli_name}_J{self.J}_nu{self.nu!r}_G{g}"


@dataclass
class ExperimentSpec:
    train_path: str
    test_path: str | None
    algorithms: list
    J: list
    nu: list
    G: list
    M: int
    out_dir: str
    subsample: int | None = None
    seed: int = 0
    max_cells: int = 1000
    threads: int = 1
    early_stop_loss: float | None = None
    cells: list = field(default_factory=list)

    def __post_init__(self):
        for name in ("algorithms", "J", "nu", "G"):
            if not getattr(self, name):
                raise ValueError(f"grid {name} is empty")
        self.algorithms = [Algorithm.parse(a) for a in self.algorithms]
        cells = []
        for algo, J, nu in itertools.product(self.algorithms, self.J, self.nu):
            for G in (self.G if algo.is_abc else [None]):
                cells.append(Cell(algo, J, nu, G))
        if len(cells) > self.max_cells:
            raise ValueError(f"grid has {len(cells)} cells, above the cap of {self.max_cells}")
        self.cells = cells


def _run_cell(cell: Cell, spec: ExperimentSpec, train_set, test_set, path: str):
    config = TrainConfig(cell.algo, J=cell.J, nu=cell.nu, M=spec.M,
                         G=1 if cell.G is None else cell.G,
                         early_stop_loss=spec.early_stop_loss, threads=spec.threads)
    ensemble = train(config, train_set, test_set)
    atomic_write_text(path, metrics_csv(ensemble))
    return cell


def _cell_result(path: str):
    rows = read_metrics(path)
    if not rows:
        return None, 0
    last = rows[-1]
    err = int(last["test_error"]) if last["test_error"] != "" else None
    return err, int(last["trees_fit_cum"])


def run_sweep(spec: ExperimentSpec, args, jobs: int = 1) -> int:
    os.makedirs(os.path.join(spec.out_dir, "cells"), exist_ok=True)
    train_set = _load(spec.train_path, args)
    if spec.subsample is not None:
        train_set = subsample(train_set, spec.subsample, spec.seed)
    test_set = _load_test(spec.test_path, train_set, args) if spec.test_path else None

    paths = {c: os.path.join(spec.out_dir, "cells", c.name + ".csv") for c in spec.cells}
    todo = [c for c in spec.cells if not os.path.exists(paths[c])]
    log.info("%d cells, %d to run", len(spec.cells), len(todo))
    failed = {}
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            futures = {c: pool.submit(_run_cell, c, spec, train_set, test_set, paths[c]) for c in todo}
            for c, fut in futures.items():
                try:
                    fut.result()
                except Exception as exc:  # noqa: BLE001 - reported per cell
                    failed[c] = exc
    else:
        for c in todo:
            try:
                _run_cell(c, spec, train_set, test_set, paths[c])
            except Exception as exc:  # noqa: BLE001 - reported per cell
                failed[c] = exc
    for c, exc in failed.items():
        print(f"cell {c.name} failed: {exc}", file=sys.stderr)

    results = {}
    for c in spec.cells:
        if c not in failed and os.path.exists(paths[c]):
            results[c] = _cell_result(paths[c])

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for c, (err, trees) in results.items():
        w.writerow([c.algo.cli_name, c.J, repr(c.nu), "" if c.G is None else c.G,
                    "" if err is None else err, trees])
    atomic_write_text(os.path.join(spec.out_dir, "summary.csv"), buf.getvalue())

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RATIO_HEADER)
    for c, (err, _) in results.items():
        if not c.algo.is_abc:
            continue
        plain = Cell(c.algo.plain_counterpart, c.J, c.nu, None)
        if plain not in results or err is None or results[plain][0] is None:
            continue
        plain_err = results[plain][0]
        ratio = plain_err / err if err else (float("inf") if plain_err else float("nan"))
        w.writerow([c.algo.cli_name, c.J, repr(c.nu), c.G, plain.algo.cli_name,
                    plain_err, err, repr(ratio)])
    atomic_write_text(os.path.join(spec.out_dir, "ratios.csv"), buf.getvalue())
    return 1 if failed else 0


def cmd_sweep(args, parser) -> int:
    try:
        spec = ExperimentSpec(
            train_path=args.train, test_path=args.test, algorithms=args.algos,
            J=args.J, nu=args.nu, G=args.G, M=args.M, out_dir=args.out,
            subsample=args.subsample, seed=args.seed, max_cells=args.max_cells,
            threads=args.threads if args.threads is not None else _default_threads(),
            early_stop_loss=args.early_stop_loss,
        )
    except ValueError as exc:
        parser.error(str(exc))
    try:
        return run_sweep(spec, args, jobs=max(1, args.jobs))
    except RUN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


# --- synth -------------------------------------------------------------------

def cmd_synth(args, parser) -> int:
    try:
        if args.kind == "slabs":
            ds = make_slabs(args.n, n_classes=args.classes or 3, n_features=args.features or 4,
                            margin=args.margin, seed=args.seed, direction=(1.0, 0.25))
        else:
            ds = make_clusters(args.n, n_classes=args.classes or 10,
                               n_features=args.features or 10, spread=args.spread,
                               seed=args.seed, centers_seed=args.centers_seed)
        write_libsvm(ds, args.out)
    except RUN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        return args.handler(args, args.subparser)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2


if __name__ == "__main__":
    sys.exit(main())
