"""
Result files: snapshot, probe, study and comparison CSVs, the run summary,
and reference/checkpoint JSON files.

Floats are written with 17 significant digits in CSV and with Python's
shortest round-trip repr in JSON, so a reread reproduces the data exactly.
"""
from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Iterable, List, Optional

import numpy as np
import pandas as pd

from .bench import ConvergenceStudy, Reference
from .errors import ConfigurationError

logger = logging.getLogger(__name__)

SNAPSHOT_COLUMNS = ["x_left", "x_right", "T_left", "T_right", "E_left", "E_right", "F_left", "F_right"]
FLOAT_FORMAT = "%.17g"
TIMING_COLUMNS = ("wall_time", "time_ratio", "sweep_time", "lo_time")


def prepare_output_dir(path) -> Path:
    """Create the directory and make sure it is writable before any computing starts."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    if not out.is_dir() or not os.access(out, os.W_OK):
        raise ConfigurationError(f"output directory {out} is not writable")
    return out


def snapshot_frame(state=None) -> pd.DataFrame:
    """One row per element; an empty frame keeps the header."""
    if state is None:
        return pd.DataFrame(columns=SNAPSHOT_COLUMNS)
    mesh = state.T.mesh
    return pd.DataFrame({
        "x_left": mesh.nodes[:-1],
        "x_right": mesh.nodes[1:],
        "T_left": state.T.left,
        "T_right": state.T.right,
        "E_left": state.E.left,
        "E_right": state.E.right,
        "F_left": state.F.left,
        "F_right": state.F.right,
    }, columns=SNAPSHOT_COLUMNS)


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("wrote %s", path)
    return path


def write_snapshot(out_dir: Path, index, state=None) -> Path:
    return _write_csv(snapshot_frame(state), Path(out_dir) / f"snapshot_{index}.csv")


def read_snapshot(path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def write_probes(out_dir: Path, traj) -> Path:
    columns = ["t"] + [f"T(x={x:g})" for x in traj.probe_positions]
    return _write_csv(pd.DataFrame(traj.probe_rows, columns=columns), Path(out_dir) / "probes.csv")


def _l2(field) -> float:
    return float(np.sqrt(np.sum(field.mesh.lumped_weights * field.values**2)))


def run_summary(traj, problem, method: str, deterministic: bool = True) -> dict:
    final = traj.final
    reports = traj.reports
    return {
        "problem": problem.name,
        "method": method,
        "elements": problem.mesh.n_elements,
        "groups": problem.groups.n_groups,
        "directions": problem.quad.n_directions,
        "steps": len(reports),
        "t_final": final.t,
        "total_sweeps": traj.total_sweeps,
        "total_outer_iterations": sum(r.outer_iterations for r in reports),
        "fixups": sum(r.fixups for r in reports),
        "floors": traj.total_floors,
        "norms": {"T": _l2(final.T), "E": _l2(final.E), "F": _l2(final.F)},
        "max_energy_defect": max((r.energy_defect for r in reports), default=0.0),
        "reports": [r.as_row(timings=not deterministic) for r in reports],
    }


def _write_json(data: dict, path: Path) -> Path:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("wrote %s", path)
    return path


def emit_outputs(out_dir, traj, problem, method: str, deterministic: bool = True) -> List[Path]:
    """Snapshots, probes and summary of one run."""
    out = Path(out_dir)
    written = []
    if traj.snapshot_times:
        for i in range(len(traj.snapshot_times)):
            written.append(write_snapshot(out, i, traj.snapshots.get(i)))
    else:
        written.append(write_snapshot(out, "final", traj.final))
    written.append(write_probes(out, traj))
    written.append(_write_json(run_summary(traj, problem, method, deterministic), out / "summary.json"))
    return written


def write_convergence(out_dir, studies: Iterable[ConvergenceStudy]) -> Path:
    frames = []
    for study in studies:
        table = study.table()
        table["space_order"] = study.space_order
        table["time_order"] = study.time_order
        frames.append(table)
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=["method", "elements", "dt", "l2_error", "space_order", "time_order"])
    return _write_csv(frame, Path(out_dir) / "convergence.csv")


def write_compare(out_dir, table: pd.DataFrame, deterministic: bool = True) -> Path:
    if deterministic:
        table = table.drop(columns=[c for c in TIMING_COLUMNS if c in table.columns])
    return _write_csv(table, Path(out_dir) / "compare.csv")


def _reference_payload(ref: Reference) -> dict:
    return {
        "name": ref.name,
        "method": ref.method,
        "dt": ref.dt,
        "t_final": ref.t_final,
        "nodes": ref.nodes.tolist(),
        "T": ref.T.tolist(),
        "E": ref.E.tolist(),
        "F": ref.F.tolist(),
    }


def save_reference(path, ref: Reference) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return _write_json(_reference_payload(ref), path)


def load_reference(path) -> Reference:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(
            f"reference file {path} not found; run 'smtrt reference' with the same config first")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        return Reference(
            name=data["name"],
            method=data["method"],
            dt=float(data["dt"]),
            t_final=float(data["t_final"]),
            nodes=np.asarray(data["nodes"], dtype=float),
            T=np.asarray(data["T"], dtype=float),
            E=np.asarray(data["E"], dtype=float),
            F=np.asarray(data["F"], dtype=float),
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigurationError(f"reference file {path} is malformed: {exc}") from exc


def write_checkpoint(out_dir: Path, state, problem) -> Optional[Path]:
    """Last good state in the reference format; a failed write is logged, not raised."""
    ref = Reference.from_state(problem.name, "checkpoint", float("nan"), state)
    payload = _reference_payload(ref)
    payload["step"] = state.step
    try:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        return _write_json(payload, Path(out_dir) / "checkpoint.json")
    except OSError as exc:
        logger.error("could not write checkpoint: %s", exc)
        return None
