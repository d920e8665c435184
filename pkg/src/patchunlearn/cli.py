"""Command-line surface tying the pipeline together.

Exit codes: 0 success, 1 usage error, 2 data error, 3 non-convergence
(partial artifacts are still written).
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import data as dt
from .data import DataParseError, Dataset, domain_box_for, gen_blobs, train_mlp
from .metrics import accuracy, mean_training_loss, mia_recall, unlearn_metrics
from .network import FeatureMap, ModelParseError
from .patching import PatchedModel, load_patched_model, save_patched_model
from .reporting import (parse_report, write_manifest, write_metrics_csv,
                        write_plot_data, write_report, write_timing_sidecar)
from .unlearn import RequestError, UnlearnRequest, run_request

USAGE_ERROR = 1
DATA_ERROR = 2
NON_CONVERGENCE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


class UsageError(ValueError):
    pass


def _parse_kv(spec: str) -> dict:
    out = {}
    for item in spec.split(","):
        if not item:
            continue
        key, _, value = item.partition("=")
        if not value:
            raise UsageError(f"bad spec item {item!r} (expected key=value)")
        out[key] = value
    return out


def load_data_spec(spec: str) -> tuple[Dataset, Dataset | None]:
    """Parse a --data spec into (train, test-or-None).

    Formats:
      blobs:classes=3,per_class=200,dim=2,spread=0.5,seed=7
      csv:train=PATH,label=COL[,test=PATH]
      idx:images=PATH,labels=PATH[,test_images=PATH,test_labels=PATH]
    """
    kind, _, rest = spec.partition(":")
    kv = _parse_kv(rest)
    if kind == "blobs":
        return gen_blobs(
            n_classes=int(kv.get("classes", 3)),
            per_class=int(kv.get("per_class", 200)),
            dim=int(kv.get("dim", 2)),
            spread=float(kv.get("spread", 0.5)),
            seed=int(kv.get("seed", 7)),
        )
    if kind == "csv":
        if "train" not in kv or "label" not in kv:
            raise UsageError("csv spec needs train=PATH,label=COL")
        train, stats = dt.load_csv(kv["train"], int(kv["label"]))
        test = None
        if "test" in kv:
            test, _ = dt.load_csv(kv["test"], int(kv["label"]), stats=stats,
                                  split="test")
        return train, test
    if kind == "idx":
        if "images" not in kv or "labels" not in kv:
            raise UsageError("idx spec needs images=PATH,labels=PATH")
        train = dt.load_idx(kv["images"], kv["labels"])
        test = None
        if "test_images" in kv:
            test = dt.load_idx(kv["test_images"], kv["test_labels"])
            test.split = "test"
        return train, test
    raise UsageError(f"unknown data spec kind {kind!r}")


def _parse_select(select: str, train: Dataset, seed: int):
    kind, _, rest = select.partition(":")
    if kind == "random":
        n = int(rest)
        rng = np.random.default_rng(seed)
        return sorted(int(i) for i in
                      rng.choice(len(train), size=n, replace=False))
    if kind == "ids":
        with open(rest, "r", encoding="utf-8") as fh:
            return sorted({int(line) for line in fh if line.strip()})
    if kind == "class":
        c = int(rest)
        idx = np.nonzero(train.labels == c)[0]
        if not len(idx):
            raise UsageError(f"no training points of class {c}")
        return [int(i) for i in idx]
    raise UsageError(f"unknown --select kind {kind!r}")


def _cmd_train(args) -> int:
    train, test = load_data_spec(args.data)
    widths = [int(w) for w in args.arch.split(",") if w]
    net = train_mlp(train, widths, epochs=args.epochs, lr=args.lr,
                    batch=args.batch, seed=args.seed)
    pm = PatchedModel(base=net, featuremap=FeatureMap())
    save_patched_model(pm, args.out)
    if test is not None:
        print(f"test accuracy: {accuracy(net, test):.2f}%")
    write_manifest(f"{args.out}.manifest.json", vars(args),
                   {"model": args.out})
    return 0


def _cmd_retrain(args) -> int:
    train, test = load_data_spec(args.data)
    drop = _parse_select(args.drop, train, args.seed)
    keep = [i for i in range(len(train)) if i not in set(drop)]
    retained = train.subset(keep)
    widths = [int(w) for w in args.arch.split(",") if w]
    t0 = time.perf_counter()
    net = train_mlp(retained, widths, epochs=args.epochs, lr=args.lr,
                    batch=args.batch, seed=args.seed,
                    n_classes=train.n_classes)
    secs = time.perf_counter() - t0
    pm = PatchedModel(base=net, featuremap=FeatureMap())
    save_patched_model(pm, args.out)
    print(f"retrain wall-clock: {secs:.3f}s")
    if test is not None:
        print(f"test accuracy: {accuracy(net, test):.2f}%")
    write_manifest(f"{args.out}.manifest.json", vars(args),
                   {"model": args.out})
    return 0


def _cmd_unlearn(args) -> int:
    mode = {"single": "single", "multi": "multipoint",
            "class": "class"}[args.mode]
    train, _test = load_data_spec(args.data)
    if mode == "class" and not args.select.startswith("class:"):
        raise UsageError("--mode class requires --select class:C")
    du_idx = _parse_select(args.select, train, args.seed)
    if mode == "single" and len(du_idx) != 1:
        raise UsageError("--mode single requires exactly one selected point")
    pm = load_patched_model(args.model)
    feats = pm.featuremap.apply(train.features)
    box = domain_box_for(Dataset(feats, train.labels))
    request = UnlearnRequest(
        mode=mode,
        features=feats[du_idx],
        labels=train.labels[du_idx],
        domain_box=box,
        y_unlearn=(int(args.select.split(":", 1)[1])
                   if mode == "class" else None),
        delta=args.delta,
        k=args.k,
        lam=args.lam,
        margin=args.eps,
        seed=args.seed,
        max_iterations=args.max_iterations,
        confusion_mode=args.confusion_mode,
        reference_features=feats,
    )
    patched, report = run_request(pm, request)
    save_patched_model(patched, args.out)
    write_report(report, args.report)
    write_timing_sidecar(report, args.report)
    with open(f"{args.report}.du_ids", "w", encoding="utf-8") as fh:
        fh.writelines(f"{i}\n" for i in du_idx)
    write_manifest(f"{args.report}.manifest.json", vars(args),
                   {"model_in": args.model, "model_out": args.out,
                    "report": args.report})
    print(f"status={report.status} iterations={report.iterations} "
          f"flip_rate={report.final_flip_rate:.4f}")
    return 0 if report.status in ("converged", "no-op") else NON_CONVERGENCE


def _cmd_eval(args) -> int:
    train, test = load_data_spec(args.data)
    if test is None:
        raise UsageError("eval needs a data spec with a test split")
    before = load_patched_model(args.before)
    after = load_patched_model(args.after)
    du_idx = _parse_select(args.du, train, args.seed) if args.du else []
    dr_idx = [i for i in range(len(train)) if i not in set(du_idx)]
    d_u = train.subset(du_idx) if du_idx else train
    d_r = train.subset(dr_idx)
    delta = unlearn_metrics(before, after, d_u, d_r, test,
                            y_unlearn=args.class_label,
                            class_split=args.class_label is not None)
    mia = None
    if args.mia:
        tau = mean_training_loss(before, train)
        mia = (mia_recall(before, d_u, tau), mia_recall(after, d_u, tau))
    write_metrics_csv(delta, args.report, mia=mia)
    for name, b, a, d in delta.rows():
        print(f"{name}: {b:.2f} -> {a:.2f} (delta {d:+.2f})")
    if mia:
        print(f"MIA recall: {mia[0]:.2f} -> {mia[1]:.2f}")
    return 0


def _cmd_report(args) -> int:
    series = {}
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("report,status,iterations,final_flip_rate,patch_count\n")
        for path in args.inputs:
            rep = parse_report(path)
            name = path.rsplit("/", 1)[-1]
            fh.write(f"{name},{rep.get('status')},{rep.get('iterations')},"
                     f"{rep.get('final_flip_rate')},"
                     f"{rep.get('patch_count')}\n")
            # accuracy on the unlearned set, percent, per iteration
            series[name] = [
                (row["iteration"],
                 100.0 * (1.0 - row["success_fraction"]))
                for row in rep["rows"]
            ]
    if args.plot_data:
        write_plot_data(series, args.plot_data)
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="patchunlearn",
                description="certifiable patch-based unlearning")
    sub = p.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train a base model")
    tr.add_argument("--data", required=True)
    tr.add_argument("--arch", required=True, help="hidden widths, e.g. 16,16")
    tr.add_argument("--epochs", type=int, default=50)
    tr.add_argument("--lr", type=float, default=0.1)
    tr.add_argument("--batch", type=int, default=32)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", required=True)
    tr.set_defaults(func=_cmd_train)

    rt = sub.add_parser("retrain", help="naive retrain baseline")
    rt.add_argument("--data", required=True)
    rt.add_argument("--arch", required=True)
    rt.add_argument("--drop", required=True, help="ids:FILE or random:N")
    rt.add_argument("--epochs", type=int, default=50)
    rt.add_argument("--lr", type=float, default=0.1)
    rt.add_argument("--batch", type=int, default=32)
    rt.add_argument("--seed", type=int, default=0)
    rt.add_argument("--out", required=True)
    rt.set_defaults(func=_cmd_retrain)

    un = sub.add_parser("unlearn", help="apply patch-based unlearning")
    un.add_argument("--model", required=True)
    un.add_argument("--data", required=True)
    un.add_argument("--mode", required=True,
                    choices=["single", "multi", "class"])
    un.add_argument("--select", required=True,
                    help="random:N | ids:FILE | class:C")
    un.add_argument("--k", type=int, default=1)
    un.add_argument("--delta", type=float, default=0.9)
    un.add_argument("--lambda", dest="lam", type=float, default=1e4)
    un.add_argument("--eps", type=float, default=1e-3)
    un.add_argument("--seed", type=int, default=0)
    un.add_argument("--max-iterations", type=int, default=50)
    un.add_argument("--confusion-mode", default="constant",
                    choices=["constant", "affine"])
    un.add_argument("--out", required=True)
    un.add_argument("--report", required=True)
    un.set_defaults(func=_cmd_unlearn)

    ev = sub.add_parser("eval", help="before/after metrics")
    ev.add_argument("--before", required=True)
    ev.add_argument("--after", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--du", help="ids:FILE selection of the unlearned set")
    ev.add_argument("--mia", action="store_true")
    ev.add_argument("--class-label", type=int, default=None)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--report", required=True)
    ev.set_defaults(func=_cmd_eval)

    rp = sub.add_parser("report", help="aggregate reports into tables")
    rp.add_argument("--in", dest="inputs", nargs="+", required=True)
    rp.add_argument("--out", required=True)
    rp.add_argument("--plot-data", default=None)
    rp.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except RequestError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (DataParseError, ModelParseError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
