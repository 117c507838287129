"""Machine-readable run traces.

Three files per run directory, all written atomically (temp file in the
same directory, then rename) so an interrupted run never leaves a
truncated trace:

* ``trace.csv`` - one row per evaluation with sampler and cost columns;
  '.' decimal separator, LF line endings, no locale dependence. Wall-clock
  timings are deliberately kept out of this file so identical runs produce
  byte-identical traces; timings live in summary.txt.
* ``evaluations.jsonl`` - one JSON object per evaluation including the
  fingerprint and the generating latent.
* ``summary.txt`` - config echo, final best, cost counters, per-phase
  wall-clock.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass
from typing import Optional

from .optimizer import RunRecord

TRACE_COLUMNS = [
    "iteration",
    "batch_index",
    "y",
    "best_so_far",
    "accept_rate",
    "beta_final",
    "restarts",
    "fallbacks",
    "decoder_calls_cum",
    "gp_predicts_cum",
]


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    batch_index: int
    y: float
    best_so_far: float
    accept_rate: Optional[float]
    beta_final: Optional[float]
    restarts: Optional[int]
    fallbacks: Optional[int]
    decoder_calls_cum: int
    gp_predicts_cum: int

    def as_list(self) -> list[str]:
        return [_fmt(getattr(self, c)) for c in TRACE_COLUMNS]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def atomic_write_text(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_rows(record: RunRecord) -> list[TraceRow]:
    stats = {s.iteration: s for s in record.iteration_stats}
    best = float("-inf")
    rows = []
    for e in record.evaluations:
        best = max(best, e.y)
        s = stats[e.iteration]
        rows.append(
            TraceRow(
                iteration=e.iteration,
                batch_index=e.batch_index,
                y=e.y,
                best_so_far=best,
                accept_rate=s.accept_rate,
                beta_final=s.beta_final,
                restarts=s.restarts,
                fallbacks=s.fallbacks,
                decoder_calls_cum=s.decoder_calls_cum,
                gp_predicts_cum=s.gp_predicts_cum,
            )
        )
    return rows


def render_trace_csv(record: RunRecord) -> str:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for row in trace_rows(record):
        writer.writerow(row.as_list())
    return buf.getvalue()


def write_trace(record: RunRecord, path) -> None:
    atomic_write_text(path, render_trace_csv(record))


def write_evaluations(record: RunRecord, path) -> None:
    lines = []
    for e, z in zip(record.evaluations, record.latents):
        lines.append(
            json.dumps(
                {
                    "iteration": e.iteration,
                    "batch_index": e.batch_index,
                    "fingerprint": list(e.structure.fingerprint.counts),
                    "label": e.structure.label,
                    "y": e.y,
                    "latent": [float(v) for v in z],
                },
                separators=(",", ":"),
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_summary(record: RunRecord, path, config_lines: Optional[list[str]] = None) -> None:
    lines = [f"strategy = {record.strategy}"]
    if config_lines:
        lines.extend(config_lines)
    lines.append(f"evaluations = {len(record.evaluations)}")
    lines.append(f"final_best = {_fmt(record.best)}")
    lines.append(f"decoder_calls = {record.decoder_calls}")
    lines.append(f"gp_predicts = {record.gp_predicts}")
    for phase in sorted(record.wall_seconds):
        lines.append(f"wall_seconds.{phase} = {record.wall_seconds[phase]:.3f}")
    for flag in record.flags:
        lines.append(f"flag = {flag}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_run_outputs(record: RunRecord, out_dir, config_lines=None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_trace(record, os.path.join(out_dir, "trace.csv"))
    write_evaluations(record, os.path.join(out_dir, "evaluations.jsonl"))
    write_summary(record, os.path.join(out_dir, "summary.txt"), config_lines)


def append_diagnostics_csv(path, row: dict) -> None:
    """Append one diagnostics row, rewriting the file atomically."""
    columns = [
        "kind",
        "dim",
        "n",
        "delta",
        "seed",
        "mean_radius",
        "sd_radius",
        "shell_fraction",
        "overlap",
    ]
    existing = ""
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as fh:
            existing = fh.read()
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if not existing:
        writer.writerow(columns)
    writer.writerow([_fmt(row.get(c)) for c in columns])
    atomic_write_text(path, existing + buf.getvalue())
