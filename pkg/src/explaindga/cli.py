"""Command-line entry point: ``explaindga <subcommand> [options]``.

Exit codes: 0 success (classify reports bad lines in its status column),
1 usage or configuration error, 2 internal error. Errors are printed to
stderr as one JSON object per line.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from itertools import islice
from pathlib import Path

import numpy as np

from . import evalharness, features, forest, selection, synthdga, tuning
from .data import LabeledDataset, featurize, parse_all
from .domains import load_suffix_db, parse, sanitize
from .errors import ExplainDGAError

DEFAULT_SEED = 1337
STREAM_WINDOW = 512


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@contextlib.contextmanager
def atomic_output(path):
    """Yield a temp path next to ``path``; rename over it on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _resolve_selection(value: str) -> features.FeatureSetSelection:
    try:
        return features.named_selection(value)
    except KeyError:
        pass
    p = Path(value)
    if not p.exists():
        raise UsageError(f"unknown selection {value!r} (not a named set or an existing file)")
    return selection.SelectionReport.load(p).to_selection()


def _read_domains(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return list(_iter_domains(fh))


def _iter_domains(fh):
    """Domains from a bare list or from a CSV whose header has a ``domain`` column."""
    first = fh.readline()
    if not first:
        return
    header = next(csv.reader([first]))
    if "domain" in header and len(header) > 1 or header == ["domain"]:
        col = header.index("domain")
        for row in csv.reader(fh):
            if row:
                yield row[col]
        return
    if first.strip():
        yield first.strip()
    for line in fh:
        if line.strip():
            yield line.strip()


def _load_dataset(path) -> LabeledDataset:
    try:
        return LabeledDataset.from_csv(path)
    except KeyError as e:
        raise UsageError(f"{path}: dataset CSV needs 'domain' and 'label' columns") from e


def _hyperparams(args) -> forest.HyperParams:
    base = {}
    if getattr(args, "hparams", None):
        with open(args.hparams, encoding="utf-8") as fh:
            base = json.load(fh)
        base = base.get("hyperparams", base)
    for name in ("n_estimators", "criterion", "max_depth", "max_features", "class_weight"):
        v = getattr(args, name, None)
        if v is not None:
            base[name] = v
    if getattr(args, "bootstrap", None) is not None:
        base["bootstrap"] = args.bootstrap == "true"
    if base.get("max_depth") in ("none", "None", 0):
        base["max_depth"] = None
    return forest.HyperParams(**base)


def _mode(value: str) -> str:
    return forest.OVR if value == "ovr" else forest.DIRECT


# -- subcommands -------------------------------------------------------------


def cmd_gen(args) -> int:
    ds = synthdga.build_corpus(per_family=args.per_family, seed=args.seed)
    with atomic_output(args.out) as tmp:
        ds.to_csv(tmp)
    return 0


def cmd_extract(args) -> int:
    sel = _resolve_selection(args.selection)
    db = load_suffix_db(args.suffix_list)
    with open(args.input, encoding="utf-8") as fh:
        head = fh.readline()
    labeled = "label" in next(csv.reader([head]), [])
    if labeled:
        ds = _load_dataset(args.input)
        domains, labels = ds.domains, ds.labels
    else:
        domains, labels = _read_domains(args.input), None
    X = features.Extractor(sel).matrix(parse_all(domains, db))
    with atomic_output(args.out) as tmp:
        features.write_feature_csv(tmp, sel.member_ids, X, labels)
    return 0


_SELECTORS = ("drop-degenerate", "relieff", "multisurf", "rfe-mdi", "rfe-pi", "pipeline")


def cmd_select(args) -> int:
    ds = _load_dataset(args.input)
    m = featurize(ds, features.UNION, load_suffix_db(args.suffix_list))
    hp = forest.HyperParams(n_estimators=args.n_estimators or selection.SELECTION_HP.n_estimators)
    method = args.method
    if method == "pipeline":
        reports = selection.run_pipeline(m, seed=args.seed, hp=hp, folds=args.folds)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, rep in reports.items():
            with atomic_output(out / f"{name.lower()}.json") as tmp:
                rep.save(tmp)
        return 0
    base = m.subset(columns=selection.drop_degenerate(m).selected_ids)
    if method == "drop-degenerate":
        rep = selection.drop_degenerate(m)
    elif method == "relieff":
        rep = selection.relieff(base, args.k_neighbors)
    elif method == "multisurf":
        rep = selection.multisurf(base)
    else:
        rep = selection.rfe(base, selection.MDI if method == "rfe-mdi" else selection.PI, args.folds, hp,
                            seed=args.seed)
    with atomic_output(args.out) as tmp:
        rep.save(tmp)
    return 0


def cmd_tune(args) -> int:
    ds = _load_dataset(args.input)
    m = featurize(ds, _resolve_selection(args.selection), load_suffix_db(args.suffix_list))
    res = tuning.random_search(m, trials=args.trials, folds=args.folds, seed=args.seed,
                               mode=_mode(args.mode), n_jobs=args.threads)
    with atomic_output(args.log) as tmp:
        res.write_log(tmp)
    with atomic_output(args.out) as tmp, open(tmp, "w", encoding="utf-8") as fh:
        json.dump({"trial": res.best_index, "mean_f1": res.best.mean_f1,
                   "hyperparams": res.best.hyperparams.to_dict()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def cmd_train(args) -> int:
    sel = _resolve_selection(args.selection)
    ds = _load_dataset(args.input)
    m = featurize(ds, sel, load_suffix_db(args.suffix_list))
    model = forest.train(m, _hyperparams(args), _mode(args.mode), args.seed, n_jobs=args.threads,
                         selection_id=sel.name)
    with atomic_output(args.model) as tmp:
        model.save(tmp)
    return 0


def cmd_eval(args) -> int:
    sel = _resolve_selection(args.selection)
    ds = _load_dataset(args.input)
    plan = evalharness.CVPlan(args.repetitions, args.folds, args.seed)
    report = evalharness.cross_validate(ds, sel, _hyperparams(args), _mode(args.mode), plan,
                                        n_jobs=args.threads, suffix_db=load_suffix_db(args.suffix_list))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with atomic_output(out / "metrics.csv") as tmp:
        report.write_metrics_csv(tmp)
    with atomic_output(out / "confusion.csv") as tmp:
        report.write_confusion_csv(tmp)
    with atomic_output(out / "timing.csv") as tmp:
        report.write_timing_csv(tmp)
    if args.compare:
        classes, other = evalharness.read_confusion_csv(args.compare)
        if tuple(classes) != tuple(report.classes):
            raise UsageError("--compare confusion matrix has different classes")
        with atomic_output(out / "combined_confusion.csv") as tmp:
            evalharness.write_combined_confusion(tmp, report.classes, report.confusion, other)
    return 0


def _explanation_cells(exp: forest.Explanation) -> list[str]:
    return [f"{fid}={value:g}({weight:.6f})" for fid, value, weight in exp.top]


def _classify_window(model, ex, db, lines, top_k):
    records = []
    vectors, ok = [], []
    for d in lines:
        try:
            p = parse(sanitize(d), db)
            vectors.append(ex.values(p))
            ok.append(True)
        except (ExplainDGAError, IndexError, ValueError) as e:
            vectors.append(None)
            ok.append(type(e).__name__)
    good = [v for v in vectors if v is not None]
    probs = iter(np.atleast_2d(model.predict_proba(np.array(good))) if good else [])
    for d, v, status in zip(lines, vectors, ok):
        if v is None:
            records.append({"domain": d, "status": f"error:{status}", "predicted": "", "probability": None,
                            "explanation": []})
            continue
        pr = next(probs)
        cls = int(np.argmax(pr))
        rec = {"domain": d, "status": "ok", "predicted": model.classes[cls], "probability": float(pr[cls]),
               "explanation": []}
        if top_k > 0:
            exp = forest.explain_prediction(model, np.array(v), top_k)
            rec["explanation"] = [{"feature": f, "value": val, "weight": w} for f, val, w in exp.top]
            rec["_cells"] = _explanation_cells(exp)
        records.append(rec)
    return records


def _emit(records, fmt, out, top_k):
    for rec in records:
        if fmt == "jsonl":
            rec = {k: v for k, v in rec.items() if not k.startswith("_")}
            out.write(json.dumps(rec, sort_keys=True) + "\n")
        else:
            prob = "" if rec["probability"] is None else f"{rec['probability']:.6f}"
            buf = io.StringIO()
            csv.writer(buf, lineterminator="\n").writerow(
                [rec["domain"], rec["status"], rec["predicted"], prob, *rec.get("_cells", [])])
            out.write(buf.getvalue())


def cmd_classify(args) -> int:
    model = forest.ForestModel.load(args.model)
    ex = features.Extractor(features.FeatureSetSelection(model.selection_id or "model", model.feature_ids))
    db = load_suffix_db(args.suffix_list)
    top_k = args.top_k

    def run(out):
        if args.format == "csv":
            w = csv.writer(out, lineterminator="\n")
            w.writerow(["domain", "status", "predicted", "probability",
                        *(f"top{i + 1}" for i in range(top_k))])
        src = open(args.input, encoding="utf-8") if args.input != "-" else sys.stdin
        try:
            domains = _iter_domains(src)
            windows = iter(lambda: list(islice(domains, STREAM_WINDOW)), [])
            if args.threads > 1:
                with ThreadPoolExecutor(args.threads) as pool:
                    pending = []
                    for win in windows:
                        pending.append(pool.submit(_classify_window, model, ex, db, win, top_k))
                        if len(pending) >= args.threads:
                            _emit(pending.pop(0).result(), args.format, out, top_k)
                    for fut in pending:
                        _emit(fut.result(), args.format, out, top_k)
            else:
                for win in windows:
                    _emit(_classify_window(model, ex, db, win, top_k), args.format, out, top_k)
        finally:
            if src is not sys.stdin:
                src.close()

    if args.out in (None, "-"):
        run(sys.stdout)
    else:
        with atomic_output(args.out) as tmp, open(tmp, "w", encoding="utf-8", newline="") as fh:
            run(fh)
    return 0


def cmd_bench(args) -> int:
    model = forest.ForestModel.load(args.model)
    if args.input:
        domains = _read_domains(args.input)
    else:
        domains = synthdga.build_corpus(per_family=max(200, -(-args.samples // len(synthdga.DEFAULT_FAMILIES))),
                                        seed=args.seed).domains
    domains = (domains * (-(-args.samples // len(domains))))[:args.samples] if args.samples else domains
    res = evalharness.bench_throughput(model, domains, batch=args.batch, n_jobs=args.threads,
                                       suffix_db=load_suffix_db(args.suffix_list))
    with atomic_output(args.out) as tmp, open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["measure", "value"])
        w.writerows(res.as_rows())
    return 0


# -- argument parsing --------------------------------------------------------


def _add_hp_flags(p):
    p.add_argument("--hparams", help="JSON file with hyperparameters (e.g. the output of tune)")
    p.add_argument("--n-estimators", type=int)
    p.add_argument("--criterion", choices=("gini", "entropy"))
    p.add_argument("--max-depth", type=lambda s: None if s.lower() == "none" else int(s))
    p.add_argument("--max-features")
    p.add_argument("--bootstrap", choices=("true", "false"))
    p.add_argument("--class-weight")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="explaindga", description=__doc__.splitlines()[0])
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--suffix-list", help="public suffix file (default: bundled snapshot)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", parents=[common], help="generate the synthetic labeled corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--per-family", type=int, default=500)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("extract", parents=[common], help="dump feature vectors as CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--selection", default="union")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("select", parents=[common], help="run a feature selector or the full pipeline")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="report file, or directory for --method pipeline")
    p.add_argument("--method", choices=_SELECTORS, default="pipeline")
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--k-neighbors", type=int, default=selection.RELIEFF_K)
    p.add_argument("--n-estimators", type=int)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("tune", parents=[common], help="random hyperparameter search")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="best hyperparameters (JSON)")
    p.add_argument("--log", required=True, help="trial log (CSV)")
    p.add_argument("--trials", type=int, default=tuning.DEFAULT_TRIALS)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--selection", default="union")
    p.add_argument("--mode", choices=("ovr", "rf"), default="ovr")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("train", parents=[common], help="train a model file")
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--selection", default="union")
    p.add_argument("--mode", choices=("ovr", "rf"), default="ovr")
    _add_hp_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="repeated stratified cross-validation")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--selection", default="union")
    p.add_argument("--mode", choices=("ovr", "rf"), default="ovr")
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--compare", help="confusion CSV of a second model for the combined export")
    _add_hp_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("classify", parents=[common], help="classify domains with explanations")
    p.add_argument("--model", required=True)
    p.add_argument("--input", default="-")
    p.add_argument("--out")
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("bench", parents=[common], help="end-to-end throughput benchmark")
    p.add_argument("--model", required=True)
    p.add_argument("--input")
    p.add_argument("--out", required=True)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--samples", type=int, default=5000)
    p.set_defaults(func=cmd_bench)
    return parser


def _report_error(kind: str, exc: BaseException) -> None:
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return args.func(args)
    except (UsageError, FileNotFoundError, IsADirectoryError, ExplainDGAError, ValueError) as e:
        _report_error("usage", e)
        return 1
    except Exception as e:  # noqa: BLE001
        _report_error("internal", e)
        return 2


if __name__ == "__main__":
    sys.exit(main())
