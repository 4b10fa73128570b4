"""CSV and manifest writers/readers for run outputs.

Every file starts with a comment header whose first line embeds the resolved
config hash and seed; the data section below the header is deterministic, so
runs with equal hashes produce byte-identical data sections. The CSV dialect
is a strict subset: comma separator, '.' decimal point, no quoting (no field
ever contains a comma), '\n' line endings. Floats are written with repr so a
round-trip parse is exact.
"""

from __future__ import annotations

import os
from typing import Any, Iterable

from .errors import MisalignedCurves
from .stats import LearningCurve


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def standard_header(cfg_hash: str, seed: int, extra: dict[str, Any] | None = None) -> list[str]:
    lines = [f"config_hash={cfg_hash} seed={seed}"]
    if extra:
        lines.extend(f"{key}={_fmt(value)}" for key, value in extra.items())
    return lines


def write_csv(
    path: str,
    header_lines: Iterable[str],
    columns: list[str],
    rows: Iterable[Iterable[Any]],
) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_csv(path: str) -> tuple[dict[str, str], list[str], list[list[str]]]:
    """Returns (header key/values, column names, raw rows)."""
    meta: dict[str, str] = {}
    columns: list[str] = []
    rows: list[list[str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if line.startswith("#"):
                for token in line.lstrip("# ").split():
                    if "=" in token:
                        key, _, value = token.partition("=")
                        meta[key] = value
                continue
            if not columns:
                columns = line.split(",")
                continue
            if line:
                rows.append(line.split(","))
    return meta, columns, rows


# ---------------------------------------------------------------------------
# learning curves
# ---------------------------------------------------------------------------

def write_curve_csv(path: str, curve: LearningCurve, cfg_hash: str, seed: int) -> None:
    extra = {
        "variant": curve.meta.get("variant", ""),
        "lambda": curve.meta.get("lambda", ""),
    }
    columns = ["step", "mean_return", "std_return", "episodes", "returns"]
    rows = []
    for step, mean, rets, std in zip(
        curve.steps, curve.mean_returns, curve.returns, curve.std_returns()
    ):
        rows.append([step, mean, std, len(rets), ";".join(repr(r) for r in rets)])
    write_csv(path, standard_header(cfg_hash, seed, extra), columns, rows)


def read_curve_csv(path: str) -> LearningCurve:
    meta, columns, rows = read_csv(path)
    expected = ["step", "mean_return", "std_return", "episodes", "returns"]
    if columns != expected:
        raise MisalignedCurves(f"{path} is not a curve file (columns {columns})")
    steps, means, returns = [], [], []
    for row in rows:
        steps.append(int(row[0]))
        means.append(float(row[1]))
        returns.append(tuple(float(p) for p in row[4].split(";") if p))
    curve_meta = {
        "variant": meta.get("variant", ""),
        "seed": int(meta.get("seed", "0")),
        "lambda": meta.get("lambda", ""),
    }
    return LearningCurve(steps=steps, mean_returns=means, returns=returns, meta=curve_meta)


# ---------------------------------------------------------------------------
# specific reports
# ---------------------------------------------------------------------------

def write_diagnostics_csv(path: str, events, cfg_hash: str, seed: int) -> None:
    columns = ["step", "epoch", "kind", "regularizer", "lambda",
               "rel_weight_change", "condition", "ok", "message"]
    rows = [
        [e.step, e.epoch, e.kind, e.regularizer, e.lam,
         e.rel_weight_change, e.condition, e.ok, e.message.replace(",", ";")]
        for e in events
    ]
    write_csv(path, standard_header(cfg_hash, seed), columns, rows)


def write_periodic_csv(path: str, table, cfg_hash: str, seed: int) -> None:
    columns = ["epoch"] + table.columns
    rows = [[epoch, *scores] for epoch, scores in zip(table.epochs, table.scores)]
    write_csv(path, standard_header(cfg_hash, seed), columns, rows)


def write_ablation_csv(path: str, rows, cfg_hash: str, seed: int) -> None:
    columns = ["epoch", "method", "minibatch", "score_delta", "rel_weight_distance"]
    out = [
        [r.epoch, r.method, r.minibatch, r.score_delta, r.rel_weight_distance]
        for r in rows
    ]
    write_csv(path, standard_header(cfg_hash, seed), columns, out)


def write_report_csv(path: str, rows: list[dict], cfg_hash: str, seed: int) -> None:
    columns = ["variant", "max_score", "p_vs_baseline", "statistic", "n_effective"]
    out = [
        [r["variant"], r["max_score"], r["p_vs_baseline"], r["statistic"], r["n_effective"]]
        for r in rows
    ]
    write_csv(path, standard_header(cfg_hash, seed), columns, out)


def write_manifest(
    path: str,
    resolved_config: str,
    cfg_hash: str,
    seed: int,
    elapsed_seconds: float,
    outputs: list[str],
) -> None:
    """Full resolved config plus provenance. Elapsed time lives in the
    header so the data section stays byte-identical across equal runs."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_hash={cfg_hash} seed={seed}\n")
        fh.write(f"# elapsed_seconds={elapsed_seconds:.3f}\n")
        fh.write("[outputs]\n")
        for name in outputs:
            fh.write(f"{name}\n")
        fh.write("[config]\n")
        fh.write(resolved_config)


def ensure_out_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
