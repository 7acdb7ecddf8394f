"""CSV rows, JSON summary and the plain-text report."""

import csv
import json
import os
import subprocess

SCHEMA_VERSION = 1
CSV_HEADER = ("experiment", "seed", "n", "lambda", "gamma", "metric_name", "value")
CSV_NAME = "results.csv"
SUMMARY_NAME = "summary.json"


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def git_describe():
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=10, check=False)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def write_outputs(rows, summary, output_dir):
    """Write ``results.csv`` and ``summary.json``; returns their paths.

    ``rows`` holds 7-tuples (or objects with the matching attributes) in the
    CSV column order.  ``summary`` must carry ``config`` and ``results``.
    """
    os.makedirs(output_dir, exist_ok=True)
    csv_path = os.path.join(output_dir, CSV_NAME)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            if not isinstance(r, (tuple, list)):
                r = (r.experiment, r.seed, r.n, r.lam, r.gamma, r.metric, r.value)
            w.writerow([_cell(v) for v in r])
    results = list(summary.get("results", []))
    doc = {"schema_version": SCHEMA_VERSION, "git_describe": summary.get("git_describe", git_describe()),
           "config": summary.get("config", {}), "all_pass": all(r["verdict"] == "pass" for r in results),
           "results": results}
    json_path = os.path.join(output_dir, SUMMARY_NAME)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        return [tuple(r) for r in rd]


def load_summary(output_dir):
    with open(os.path.join(output_dir, SUMMARY_NAME), encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {doc.get('schema_version')!r}")
    return doc


def render_report(doc):
    lines = [f"git: {doc.get('git_describe', 'unknown')}"]
    for r in doc["results"]:
        if r["kind"] == "rate_fit":
            extra = (f"slope={r['slope']:.4f} theoretical={r['theoretical']:.4f} "
                     f"tol={r['tolerance']:.2f} ({r['criterion']}) r2={r['r2']:.4f}")
        else:
            extra = ", ".join(f"{k}={_short(v)}" for k, v in r["details"].items() if not isinstance(v, (list, dict)))
        lines.append(f"[{r['verdict'].upper()}] {r['name']}: {r['claim']}" + (f" | {extra}" if extra else ""))
    n_fail = sum(r["verdict"] != "pass" for r in doc["results"])
    lines.append(f"{len(doc['results']) - n_fail}/{len(doc['results'])} passed")
    return "\n".join(lines)


def _short(v):
    return f"{v:.4g}" if isinstance(v, float) else str(v)
