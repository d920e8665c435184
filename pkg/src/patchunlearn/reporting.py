"""Report, manifest and plot-data serialization.

Unlearning reports are split in two files on purpose: the report proper is
fully deterministic (so identical seeded runs are byte-identical) and
wall-clock timings go to a sidecar next to it.
"""

from __future__ import annotations

import hashlib
import json

from .metrics import MetricsDelta
from .unlearn import UnlearnReport


def report_to_text(report: UnlearnReport) -> str:
    """Deterministic structured text: header fields then iteration rows."""
    lines = [
        f"status={report.status}",
        f"iterations={report.iterations}",
        f"final_flip_rate={report.final_flip_rate!r}",
        f"patch_count={report.patch_count}",
        "residual_indices=" + ",".join(map(str, report.residual_indices)),
        "already_unlearned=" + ",".join(map(str, report.already_unlearned)),
    ]
    for name, idxs in sorted(report.purity_violations.items()):
        lines.append(f"purity[{name}]=" + ",".join(map(str, idxs)))
    for w in report.warnings:
        lines.append(f"warning={w}")
    lines.append("iteration,clusters,flipped,success_fraction")
    for rec in report.records:
        lines.append(
            f"{rec.index},{rec.clusters},{rec.flipped},"
            f"{rec.success_fraction!r}")
    return "\n".join(lines) + "\n"


def write_report(report: UnlearnReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report_to_text(report))


def write_timing_sidecar(report: UnlearnReport, path) -> None:
    """Wall-clock per phase, plus per-iteration seconds; non-deterministic
    by nature, hence kept out of the main report file."""
    with open(f"{path}.timing.csv", "w", encoding="utf-8") as fh:
        fh.write("phase,seconds\n")
        for phase, secs in report.timings.items():
            fh.write(f"{phase},{secs!r}\n")
        for rec in report.records:
            fh.write(f"iteration_{rec.index},{rec.seconds!r}\n")


def parse_report(path) -> dict:
    """Read a report file back into header fields plus iteration rows."""
    header: dict = {"warnings": [], "purity": {}}
    rows = []
    in_rows = False
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("iteration,"):
                in_rows = True
                continue
            if in_rows:
                it, clusters, flipped, frac = line.split(",")
                rows.append({"iteration": int(it), "clusters": int(clusters),
                             "flipped": int(flipped),
                             "success_fraction": float(frac)})
            else:
                key, _, value = line.partition("=")
                if key == "warning":
                    header["warnings"].append(value)
                elif key.startswith("purity["):
                    header["purity"][key[7:-1]] = value
                else:
                    header[key] = value
    header["rows"] = rows
    return header


def write_metrics_csv(delta: MetricsDelta, path,
                      mia: tuple[float, float] | None = None) -> None:
    """Metric rows matching the evaluation tables' column names."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("metric,before,after,delta\n")
        for name, before, after, d in delta.rows():
            fh.write(f"{name},{before!r},{after!r},{d!r}\n")
        if mia is not None:
            before, after = mia
            fh.write(f"MIA_recall,{before!r},{after!r},{before - after!r}\n")


def write_plot_data(series: dict[str, list[tuple[int, float]]], path) -> None:
    """Convergence curves: one row per (series, iteration, value)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("series,iteration,value\n")
        for name in sorted(series):
            for it, value in series[name]:
                fh.write(f"{name},{it},{value!r}\n")


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, args: dict, files: dict) -> None:
    """Everything needed to reproduce a run bit-for-bit: flags, seeds, and
    hashes of every input/output file.  No timestamps."""
    doc = {
        "args": {k: args[k] for k in sorted(args)
                 if not callable(args[k])},
        "files": {name: file_sha256(p) for name, p in sorted(files.items())},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
