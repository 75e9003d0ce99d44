"""Run orchestration and persistence.

Layout of a run directory::

    out_dir/
      manifest.json
      traces/traces.jsonl              trace.v1, one line per (question, trajectory)
      trajectories/trajectories.jsonl  trajectory.v1, same order
      trajectories/<ablation>.jsonl    re-estimated trajectories from ``ablate``
      reports/                         report.v1 JSON and CSV tables

Collection is resumable: records are appended in a fixed order and a rerun
skips every (question, trajectory) pair already present.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from . import diagnostics as dg
from .config import ConfigError, RunConfig
from .oracle import (ExactJoint, TabularAutoregressiveModel, generate_world, load_world)
from .rollout.backends import BackendError, BackendUnavailable, HttpCompletionsBackend, SyntheticBackend
from .rollout.engine import (TRAJECTORY_SCHEMA, EntropyTrajectory, evaluate_trace, generate_trace,
                             plan_checkpoints)
from .traces import QuestionInstance, TraceRecord, load_dataset

log = logging.getLogger(__name__)

MANIFEST_SCHEMA = "manifest.v1"
REPORT_SCHEMA = "report.v1"

EXIT_CLEAN, EXIT_FAILED, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2, 64

TRACES_FILE = Path("traces") / "traces.jsonl"
TRAJECTORIES_FILE = Path("trajectories") / "trajectories.jsonl"
REPORTS_DIR = Path("reports")

MC_FIDELITY_STRIDE = 4
MC_FIDELITY_N = 32

RHO_HEADER = ["model_tag", "dataset_tag", "training_stage", "mean_rho", "count", "n_undefined",
              "ci_low", "ci_high"]
GAIN_HEADER = ["model_tag", "dataset_tag", "class", "s", "mean_gain", "ci_low", "ci_high", "count"]
AUC_HEADER = ["model_tag", "dataset_tag", "s", "auc", "ci_low", "ci_high", "n_correct", "n_incorrect"]
SATURATION_HEADER = ["model_tag", "dataset_tag", "question_id", "trajectory_index", "is_correct",
                     "plateau_detected", "onset", "plateau_level", "rebound_detected", "insufficient"]
PAIRED_HEADER = ["model_tag", "dataset_tag", "original_mean_rho", "ablated_mean_rho", "delta",
                 "original_count", "ablated_count"]


class PipelineError(RuntimeError):
    """Command-level failure with a user-facing message."""


class SchemaError(PipelineError):
    pass


# -- construction ------------------------------------------------------------------

def build_backend(cfg: RunConfig):
    b = cfg.backend
    if b.kind == "http_completions":
        return HttpCompletionsBackend(b.endpoint, b.model, b.auth_env, b.timeout, cfg.max_in_flight,
                                      prompt_prefix=b.prompt_prefix, prompt_suffix=b.prompt_suffix)
    if b.world_path is not None:
        world = load_world(b.world_path)
        return SyntheticBackend(TabularAutoregressiveModel.from_joint(world), world, coupled=True,
                                label=cfg.dataset_tag)
    built = generate_world(b.world)
    if isinstance(built, ExactJoint):
        return SyntheticBackend(TabularAutoregressiveModel.from_joint(built), built, coupled=True,
                                label=cfg.dataset_tag)
    return SyntheticBackend(built.hallucinator, built.truth, coupled=False, label=cfg.dataset_tag)


def load_questions(cfg: RunConfig, backend) -> list[QuestionInstance]:
    d = cfg.dataset
    if d.format == "synthetic":
        if not callable(getattr(backend, "questions", None)):
            raise ConfigError("dataset.format", "synthetic questions need the synthetic backend")
        qs = backend.questions(d.n_questions, seed=cfg.seed, tag=cfg.dataset_tag)
    else:
        qs = load_dataset(d.path, d.format)
    return qs[:d.limit] if d.limit else qs


# -- files -------------------------------------------------------------------------

def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_complete_lines(path: Path, truncate: bool = False) -> list[str]:
    """Lines of a JSONL file, dropping (and optionally cutting off) a torn tail."""
    if not path.exists():
        return []
    raw = path.read_bytes()
    keep = raw.rfind(b"\n") + 1
    lines = raw[:keep].decode().splitlines()
    good = 0
    for line in lines:
        try:
            json.loads(line)
        except json.JSONDecodeError:
            break
        good += 1
    if good < len(lines) or keep < len(raw):
        cut = sum(len(l.encode()) + 1 for l in lines[:good])
        log.warning("%s: dropping %d bytes of incomplete output", path, len(raw) - cut)
        if truncate:
            with open(path, "r+b") as fh:
                fh.truncate(cut)
    return lines[:good]


class JsonlWriter:
    """The single append-only writer for one file."""

    def __init__(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(path, "a", encoding="utf-8")

    def write(self, line: str) -> None:
        self._fh.write(line + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _file_hashes(root: Path) -> dict[str, str]:
    out = {}
    for sub in ("traces", "trajectories", "reports"):
        d = root / sub
        if d.is_dir():
            for p in sorted(d.rglob("*")):
                if p.is_file():
                    out[p.relative_to(root).as_posix()] = sha256_file(p)
    return out


def write_manifest(root: Path, doc: dict[str, Any]) -> Path:
    doc = dict(doc)
    doc["files"] = _file_hashes(root)
    path = root / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(root: Path) -> dict[str, Any] | None:
    p = root / "manifest.json"
    return json.loads(p.read_text()) if p.exists() else None


def refresh_manifest(root: Path, **updates: Any) -> None:
    doc = read_manifest(root)
    if doc is None:
        return
    doc.update(updates)
    write_manifest(root, doc)


# -- collect -----------------------------------------------------------------------

@dataclass
class CollectResult:
    status: str
    exit_code: int
    new_traces: int = 0
    new_trajectories: int = 0
    skipped: int = 0
    failed_traces: int = 0
    messages: list[str] = field(default_factory=list)
    manifest_path: Path | None = None


def collect(cfg: RunConfig, backend=None) -> CollectResult:
    """Sample M traces per question and estimate entropy trajectories for each.

    Records go out in (question, trajectory) order. On a rerun, pairs that
    already have a trajectory (or a failed trace) are skipped and traces
    without a trajectory are reused, so an interrupted run finishes with the
    same files as an uninterrupted one.
    """
    cfg.validate()
    root = Path(cfg.out_dir)
    started = _now()
    backend = backend if backend is not None else build_backend(cfg)
    questions = load_questions(cfg, backend)
    traces_path, traj_path = root / TRACES_FILE, root / TRAJECTORIES_FILE

    existing_traces: dict[tuple[str, int], TraceRecord] = {}
    for line in _read_complete_lines(traces_path, truncate=True):
        t = TraceRecord.from_json(line)
        existing_traces[(t.question_id, t.trajectory_index)] = t
    done: set[tuple[str, int]] = set()
    for line in _read_complete_lines(traj_path, truncate=True):
        d = json.loads(line)
        if d.get("schema") != TRAJECTORY_SCHEMA:
            raise SchemaError(f"{traj_path}: expected schema {TRAJECTORY_SCHEMA}, found {d.get('schema')!r}")
        done.add((d["question_id"], d["trajectory_index"]))
    done |= {key for key, t in existing_traces.items() if t.failed}
    resumed = bool(existing_traces or done)

    res = CollectResult("clean", EXIT_CLEAN)
    unavailable = False
    positions_seen: set[tuple[int, ...]] = set()
    with JsonlWriter(traces_path) as tw, JsonlWriter(traj_path) as jw:
        for q in questions:
            for i in range(cfg.M):
                key = (q.id, i)
                if key in done:
                    res.skipped += 1
                    t = existing_traces.get(key)
                    if t is not None and not t.failed:
                        positions_seen.add(tuple(t.checkpoint_positions))
                    continue
                try:
                    trace = existing_traces.get(key)
                    if trace is None:
                        trace = generate_trace(backend, q, i, cfg.decoding, cfg.seed, cfg.stride)
                        tw.write(trace.to_json())
                        res.new_traces += 1
                    if trace.failed:
                        res.failed_traces += 1
                        res.messages.append(f"{q.id}#{i}: {trace.error}")
                        continue
                    positions_seen.add(tuple(trace.checkpoint_positions))
                    traj = evaluate_trace(backend, q, trace, cfg.N, cfg.decoding, cfg.seed,
                                          cfg.alpha_entropy, cfg.alpha_surprisal,
                                          max_in_flight=cfg.max_in_flight, group=cfg.group)
                except BackendUnavailable as e:
                    unavailable = True
                    res.messages.append(f"{q.id}#{i}: backend unavailable: {e}")
                    break
                except BackendError as e:
                    res.failed_traces += 1
                    res.messages.append(f"{q.id}#{i}: {e}")
                    continue
                jw.write(traj.to_json())
                res.new_trajectories += 1
            if unavailable:
                break

    total_traj = len(_read_complete_lines(traj_path))
    if unavailable and total_traj == 0:
        res.status, res.exit_code = "failed", EXIT_FAILED
    elif unavailable or res.failed_traces:
        res.status, res.exit_code = "partial", EXIT_PARTIAL
    n_traces = len(_read_complete_lines(traces_path))
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "artifact_version": __version__,
        "started_at": started,
        "finished_at": _now(),
        "status": res.status,
        "config": cfg.to_dict(include_out_dir=False),
        "protocol": {
            "temperature": cfg.decoding.temperature,
            "top_p": cfg.decoding.top_p,
            "max_tokens": cfg.decoding.max_tokens,
            "n_rollouts": cfg.N,
            "trajectories_per_question": cfg.M,
            "stride": cfg.stride,
            "checkpoints_include_endpoints": all(p[0] == 0 for p in positions_seen) if positions_seen else None,
            "checkpoint_positions": sorted(list(p) for p in positions_seen),
        },
        "counts": {"questions": len(questions), "traces": n_traces, "trajectories": total_traj},
        "failures": {"failed_traces": res.failed_traces, "backend_unavailable": unavailable,
                     "messages": res.messages[:50]},
        "resume": {"resumed": resumed, "skipped": res.skipped, "new_traces": res.new_traces,
                   "new_trajectories": res.new_trajectories},
    }
    res.manifest_path = write_manifest(root, manifest)
    return res


# -- loading trajectories -------------------------------------------------------------

def load_trajectories(path: Path) -> list[EntropyTrajectory]:
    out = []
    for n, line in enumerate(_read_complete_lines(Path(path)), 1):
        d = json.loads(line)
        if d.get("schema") != TRAJECTORY_SCHEMA:
            raise SchemaError(f"{path}:{n}: expected schema {TRAJECTORY_SCHEMA}, found {d.get('schema')!r}")
        out.append(EntropyTrajectory.from_json(line))
    return out


def _resolve_inputs(inputs: Sequence[str | Path]) -> list[Path]:
    paths = []
    for p in map(Path, inputs):
        if p.is_dir():
            p = p / TRAJECTORIES_FILE
        if not p.is_file():
            raise PipelineError(f"no trajectory file at {p}")
        paths.append(p)
    return paths


# -- analyze -----------------------------------------------------------------------

def _r(x: float | None) -> float | None:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return None
    return round(float(x), 6)


def _cell(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return "" if not math.isfinite(x) else f"{x:.6f}"
    return str(x)


def write_csv(path: Path, header: list[str], rows: Iterable[Sequence[Any]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())


def _stage_of(trajs: Sequence[EntropyTrajectory]) -> str:
    stages = sorted({t.group.get("training_stage", "") for t in trajs})
    return stages[0] if len(stages) == 1 else "mixed"


def analyze_trajectories(trajs: Sequence[EntropyTrajectory], seed: int = 0, B: int = 1000,
                         method: str = "pearson") -> dict[str, Any]:
    """All trace diagnostics, grouped by (model_tag, dataset_tag), as a report.v1 document."""
    if not trajs:
        raise PipelineError("no trajectories to analyze")
    groups: dict[tuple[str, str], list[EntropyTrajectory]] = defaultdict(list)
    for t in trajs:
        groups[dg.group_key(t)].append(t)
    out_groups = []
    for g in sorted(groups):
        ts = sorted(groups[g], key=lambda t: (t.question_id, t.trajectory_index))
        results = [dg.sia_alignment(t, method) for t in ts]
        row = dg.aggregate_alignment(results, B=B, seed=seed)
        gc = dg.gain_curve(ts, B=B, seed=seed)
        sc = dg.separability_curve(ts, B=B, seed=seed)
        sats = [dg.saturation_detect(t) for t in ts]
        levels = [s.plateau_level for s in sats if s.plateau_detected]
        out_groups.append({
            "model_tag": g[0], "dataset_tag": g[1], "training_stage": _stage_of(ts),
            "alignment": ({"mean_rho": _r(row[0].mean_rho), "count": row[0].count,
                           "n_undefined": row[0].n_undefined, "ci_low": _r(row[0].ci_low),
                           "ci_high": _r(row[0].ci_high)} if row else
                          {"mean_rho": None, "count": 0, "n_undefined": len(results),
                           "ci_low": None, "ci_high": None}),
            "per_trace": [{"question_id": r.question_id, "trajectory_index": r.trajectory_index,
                           "rho": _r(r.rho), "is_correct": r.is_correct,
                           "degenerate_reason": r.degenerate_reason} for r in results],
            "gain_curve": {"grid": list(gc.grid), "counts": gc.counts, "excluded": gc.excluded,
                           "diagnostic": gc.diagnostic,
                           "mean": {k: [_r(v) for v in vs] for k, vs in gc.mean.items()},
                           "ci_low": {k: [_r(v) for v in vs] for k, vs in gc.ci_low.items()},
                           "ci_high": {k: [_r(v) for v in vs] for k, vs in gc.ci_high.items()}},
            "auc_curve": {"grid": list(sc.grid), "auc": [_r(v) for v in sc.auc],
                          "ci_low": [_r(v) for v in sc.ci_low], "ci_high": [_r(v) for v in sc.ci_high],
                          "n_correct": sc.n_correct, "n_incorrect": sc.n_incorrect},
            "saturation": {
                "plateau_rate": _r(float(np.mean([s.plateau_detected for s in sats]))),
                "mean_plateau_level": _r(float(np.mean(levels))) if levels else None,
                "rebound_rate": _r(float(np.mean([s.rebound_detected for s in sats]))),
                "per_trace": [{"question_id": t.question_id, "trajectory_index": t.trajectory_index,
                               "is_correct": t.is_correct, "plateau_detected": s.plateau_detected,
                               "onset": s.onset, "plateau_level": _r(s.plateau_level),
                               "rebound_detected": s.rebound_detected, "insufficient": s.insufficient}
                              for t, s in zip(ts, sats)],
            },
        })
    return {"schema": REPORT_SCHEMA, "method": method, "bootstrap": {"B": B, "seed": seed},
            "groups": out_groups}


def write_report_tables(report: dict[str, Any], out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    rho, gain, auc, sat = [], [], [], []
    for g in report["groups"]:
        m, d = g["model_tag"], g["dataset_tag"]
        a = g["alignment"]
        rho.append([m, d, g["training_stage"], a["mean_rho"], a["count"], a["n_undefined"],
                    a["ci_low"], a["ci_high"]])
        gc = g["gain_curve"]
        for cls in ("correct", "incorrect"):
            for i, s in enumerate(gc["grid"]):
                gain.append([m, d, cls, s, gc["mean"][cls][i], gc["ci_low"][cls][i], gc["ci_high"][cls][i],
                             gc["counts"][cls]])
        ac = g["auc_curve"]
        for i, s in enumerate(ac["grid"]):
            auc.append([m, d, s, ac["auc"][i], ac["ci_low"][i], ac["ci_high"][i],
                        ac["n_correct"], ac["n_incorrect"]])
        for r in g["saturation"]["per_trace"]:
            sat.append([m, d, r["question_id"], r["trajectory_index"], r["is_correct"], r["plateau_detected"],
                        r["onset"], r["plateau_level"], r["rebound_detected"], r["insufficient"]])
    paths = []
    for name, header, rows in (("rho_table.csv", RHO_HEADER, rho), ("gain_curve.csv", GAIN_HEADER, gain),
                               ("auc_curve.csv", AUC_HEADER, auc), ("saturation.csv", SATURATION_HEADER, sat)):
        write_csv(out / name, header, rows)
        paths.append(out / name)
    return paths


def analyze(inputs: Sequence[str | Path], out: str | Path | None = None, seed: int = 0, B: int = 1000,
            method: str = "pearson") -> Path:
    """Analyze trajectory files (or run directories); returns the report path."""
    paths = _resolve_inputs(inputs)
    trajs = [t for p in paths for t in load_trajectories(p)]
    if not trajs:
        raise PipelineError("input contains no trajectories")
    report = analyze_trajectories(trajs, seed=seed, B=B, method=method)
    report["inputs"] = [{"name": p.name, "sha256": sha256_file(p)} for p in paths]
    out_dir = Path(out) if out is not None else paths[0].parent.parent / REPORTS_DIR
    out_dir.mkdir(parents=True, exist_ok=True)
    rp = out_dir / "report.json"
    rp.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    write_report_tables(report, out_dir)
    if out is None:
        refresh_manifest(paths[0].parent.parent)
    return rp


# -- ablate ------------------------------------------------------------------------

ABLATIONS = ("shuffle", "mc_fidelity")


def ablate(kind: str, cfg: RunConfig, backend=None) -> Path:
    """Re-estimate the stored trajectories under an ablation and write paired rows."""
    if kind not in ABLATIONS:
        raise ValueError(f"unknown ablation {kind!r}; expected one of {ABLATIONS}")
    cfg.validate()
    root = Path(cfg.out_dir)
    traj_path, traces_path = root / TRAJECTORIES_FILE, root / TRACES_FILE
    if not traj_path.is_file() or not traces_path.is_file():
        raise PipelineError(f"no original trajectories under {root}; run collect first")
    originals = load_trajectories(traj_path)
    if not originals:
        raise PipelineError(f"{traj_path} is empty; run collect first")
    traces = {(t.question_id, t.trajectory_index): t
              for t in map(TraceRecord.from_json, _read_complete_lines(traces_path))}
    backend = backend if backend is not None else build_backend(cfg)
    questions = {q.id: q for q in load_questions(cfg, backend)}
    ablated = []
    for orig in originals:
        q, tr = questions[orig.question_id], traces[(orig.question_id, orig.trajectory_index)]
        if kind == "shuffle":
            t = evaluate_trace(backend, q, tr, orig.mc_samples, cfg.decoding, cfg.seed, orig.alpha_entropy,
                               orig.alpha_surprisal, positions=orig.positions, shuffle=True,
                               variant="shuffle", max_in_flight=cfg.max_in_flight, group=orig.group)
        else:
            pos = plan_checkpoints(len(tr.tokens), MC_FIDELITY_STRIDE).positions
            t = evaluate_trace(backend, q, tr, MC_FIDELITY_N, cfg.decoding, cfg.seed, orig.alpha_entropy,
                               orig.alpha_surprisal, positions=pos, variant="mc_fidelity",
                               max_in_flight=cfg.max_in_flight, group=orig.group)
        ablated.append(t)
    ap = root / "trajectories" / f"{kind}.jsonl"
    ap.write_text("".join(t.to_json() + "\n" for t in ablated))
    rows = dg.paired_alignment(originals, ablated)
    name = "shuffle_ablation.csv" if kind == "shuffle" else "mc_fidelity.csv"
    out = root / REPORTS_DIR / name
    write_csv(out, PAIRED_HEADER, [[r.model_tag, r.dataset_tag, r.original_mean_rho, r.ablated_mean_rho,
                                    r.ablated_mean_rho - r.original_mean_rho, r.original_count,
                                    r.ablated_count] for r in rows])
    refresh_manifest(root)
    return out


# -- report ------------------------------------------------------------------------

def _load_report(path: Path) -> dict[str, Any]:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != REPORT_SCHEMA:
        raise SchemaError(f"{path}: expected schema {REPORT_SCHEMA}, found {doc.get('schema')!r}")
    return doc


def merge_reports(paths: Sequence[str | Path], B: int = 1000, seed: int = 0) -> list[dict[str, Any]]:
    """Alignment rows, one per (model_tag, dataset_tag), merged across reports.

    Means and intervals are recomputed from the per-trace values, so merged
    counts are the sum of the inputs.
    """
    per: dict[tuple[str, str], list[dict]] = defaultdict(list)
    stages: dict[tuple[str, str], set[str]] = defaultdict(set)
    for p in paths:
        for g in _load_report(Path(p))["groups"]:
            key = (g["model_tag"], g["dataset_tag"])
            per[key].extend(g["per_trace"])
            stages[key].add(g["training_stage"])
    clashes = {k: sorted(v) for k, v in stages.items() if len(v) > 1}
    if clashes:
        listing = "; ".join(f"{m}/{d}: {', '.join(v)}" for (m, d), v in sorted(clashes.items()))
        raise PipelineError(f"conflicting training_stage labels: {listing}")
    rows = []
    for key in sorted(per):
        recs = per[key]
        ok = [r for r in recs if r["rho"] is not None]
        vals = [r["rho"] for r in ok]
        lo, hi = dg.bootstrap_ci(vals, B, 0.95, seed, clusters=[r["question_id"] for r in ok]) if ok \
            else (math.nan, math.nan)
        rows.append({"model_tag": key[0], "dataset_tag": key[1], "training_stage": next(iter(stages[key])),
                     "mean_rho": _r(float(np.mean(vals))) if ok else None, "count": len(ok),
                     "n_undefined": len(recs) - len(ok), "ci_low": _r(lo), "ci_high": _r(hi)})
    return rows


def render_rows(rows: list[dict[str, Any]], fmt: str) -> str:
    if fmt == "json":
        return json.dumps({"schema": REPORT_SCHEMA, "table": "rho", "rows": rows}, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RHO_HEADER)
        for r in rows:
            w.writerow([_cell(r[h]) for h in RHO_HEADER])
        return buf.getvalue()
    raise ValueError(f"unknown format {fmt!r}")


def parse_rows(text: str, fmt: str) -> list[dict[str, Any]]:
    """Inverse of ``render_rows``."""
    if fmt == "json":
        return json.loads(text)["rows"]
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        rows.append({
            "model_tag": r["model_tag"], "dataset_tag": r["dataset_tag"],
            "training_stage": r["training_stage"],
            **{k: (round(float(r[k]), 6) if r[k] else None) for k in ("mean_rho", "ci_low", "ci_high")},
            "count": int(r["count"]), "n_undefined": int(r["n_undefined"]),
        })
    return rows


def report(paths: Sequence[str | Path], fmt: str = "csv", out: str | Path | None = None) -> str:
    text = render_rows(merge_reports(paths), fmt)
    if out is not None:
        Path(out).write_text(text)
    return text

