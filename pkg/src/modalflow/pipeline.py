"""generate -> train -> predict -> analyze, each stage reading and writing one run directory."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import platform
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__, rng
from .analysis import (exact_modal_bound_check, reference_trajectory, relative_error, rollout,
                       theorem_bound_check)
from .basis import FieldSample
from .config import ExperimentConfig
from .dataset import PairDataset, add_noise, generate_pairs, sample_modal_box
from .resnet import ResNet
from .solvers import BlowUpError, exact_fields
from .trajectory import Trajectory
from .training import LossHistory, latest_checkpoint, train

log = logging.getLogger(__name__)

DATASET = "dataset.mevd"
MODEL = "model.mevm"
LOSS = "loss_history.csv"
MANIFEST = "manifest.json"
LOCK = ".lock"
REPORT = "error_report.json"
REFERENCE_FIELDS = "reference_fields.npy"
CHECKPOINTS = "checkpoints"


class MissingInputsError(FileNotFoundError):
    def __init__(self, stage: str, missing: list[str]):
        super().__init__(f"{stage}: missing inputs: {', '.join(missing)}")
        self.missing = missing


class LockedError(RuntimeError):
    pass


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@contextmanager
def run_lock(out: Path):
    """Exclusive per-directory lock; a second command on the same directory fails fast."""
    out.mkdir(parents=True, exist_ok=True)
    path = out / LOCK
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockedError(f"{out} is in use by another command (remove {path} if it is stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        path.unlink(missing_ok=True)


def _require(out: Path, stage: str, names: list[str]) -> None:
    missing = [n for n in names if not (out / n).exists()]
    if missing:
        raise MissingInputsError(stage, missing)


def _update_manifest(out: Path, exp: ExperimentConfig, stage: str, files: list[str],
                     seconds: float, extra: dict | None = None) -> dict:
    path = out / MANIFEST
    manifest = json.loads(path.read_text()) if path.exists() else {}
    manifest.update({
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python": platform.python_version(),
        "config": exp.doc,
    })
    manifest.setdefault("stages", {})[stage] = {
        "files": {f: sha256(out / f) for f in sorted(files)},
        "seconds": round(seconds, 3),
        **(extra or {}),
    }
    hashes = {}
    for entry in manifest["stages"].values():
        hashes.update(entry["files"])
    manifest["output_hashes"] = dict(sorted(hashes.items()))
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def _write_config(out: Path, exp: ExperimentConfig) -> None:
    (out / "config.json").write_text(json.dumps(exp.doc, indent=1, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------


def generate(exp: ExperimentConfig, out) -> PairDataset:
    out = Path(out)
    with run_lock(out):
        start = time.perf_counter()
        basis = exp.basis()
        box = exp.box(basis)
        seed = exp.doc["seed"]
        samples = sample_modal_box(box, exp.doc["samples"], seed)
        ds = generate_pairs(basis, samples, exp.delta, exp.pde(), exp.solver())
        ds = add_noise(ds, exp.doc.get("noise", 0.0), seed)
        ds.save(out / DATASET)
        basis.save(out / "basis.json")
        _write_config(out, exp)
        _update_manifest(out, exp, "generate", [DATASET, "basis.json", "config.json"],
                         time.perf_counter() - start,
                         {"pairs": len(ds), "seed": seed, "streams": {"samples": rng.STREAM_SAMPLES,
                                                                      "noise": rng.STREAM_NOISE},
                          "solver": exp.solver().to_dict()})
    return ds


def train_model(exp: ExperimentConfig, out, resume: bool = False, progress=None) -> tuple[ResNet, LossHistory]:
    out = Path(out)
    _require(out, "train", [DATASET])
    with run_lock(out):
        start = time.perf_counter()
        ds = PairDataset.load(out / DATASET)
        basis_n = exp.basis().n
        if ds.n != basis_n:
            raise ValueError(f"dataset has n = {ds.n} but the config's basis has n = {basis_n}")
        if not np.isclose(ds.delta, exp.delta):
            raise ValueError(f"dataset time lag {ds.delta} differs from config delta {exp.delta}")
        net = exp.doc["network"]
        model = ResNet(ds.n, net["blocks"], net["depth"], net["width"], net["activation"],
                       net["seed"], net.get("init_scale", 1.0))
        cfg = exp.train_config()
        ckdir = out / CHECKPOINTS
        resume_epoch, history = None, None
        if resume:
            resume_epoch = latest_checkpoint(ckdir) if ckdir.exists() else None
            if resume_epoch is None:
                raise FileNotFoundError(f"no checkpoint to resume from in {ckdir}")
            history = LossHistory.from_csv(ckdir / f"loss_epoch{resume_epoch:05d}.csv")
            log.info("resuming from epoch %d", resume_epoch)

        def callback(epoch, hist):
            if cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
                hist.to_csv(ckdir / f"loss_epoch{epoch:05d}.csv")
            if progress:
                progress(epoch, hist)

        model, history = train(model, ds, cfg, checkpoint_dir=ckdir if cfg.checkpoint_every else None,
                               callback=callback, resume_epoch=resume_epoch, history=history)
        model.save(out / MODEL)
        history.to_csv(out / LOSS, seconds=False)
        _update_manifest(out, exp, "train", [MODEL, LOSS], time.perf_counter() - start,
                         {"final_loss": history.train_loss[-1], "epochs": history.epochs,
                          "epoch_seconds": [round(s, 4) for s in history.seconds]})
    return model, history


def _field_name(prefix: str, t: float) -> str:
    return f"fields/{prefix}_t{t:.3f}.csv"


def predict(exp: ExperimentConfig, out) -> dict[str, Trajectory]:
    out = Path(out)
    _require(out, "predict", [MODEL])
    with run_lock(out):
        start = time.perf_counter()
        basis, pde = exp.basis(), exp.pde()
        model = ResNet.load(out / MODEL)
        if model.n != basis.n:
            raise ValueError(f"model width n = {model.n} does not match basis n = {basis.n}")
        steps = exp.steps
        u0 = exp.initial_condition(basis)
        fields = exact_fields(basis, pde, u0, exp.delta, steps, exp.solver())
        np.save(out / REFERENCE_FIELDS, fields)
        trajs = {"predicted": rollout(model, FieldSample(basis.grid, fields[0]), steps, basis, exp.delta)}
        failures = {}
        for kind in exp.references():
            try:
                trajs[kind] = reference_trajectory(basis, u0, steps, exp.delta, pde, kind,
                                                   exp.solver(), fields=fields)
            except BlowUpError as exc:
                failures[kind] = str(exc)
                log.warning("reference %s failed: %s", kind, exc)
        written = [REFERENCE_FIELDS]
        for kind, traj in trajs.items():
            name = f"trajectory_{kind}.csv"
            traj.to_csv(out / name)
            written.append(name)
        (out / "fields").mkdir(exist_ok=True)
        wanted = {int(round(t / exp.delta)) for t in exp.doc["prediction"].get("field_times", [])}
        for k in sorted(k for k in wanted | {steps} if k <= steps):
            for prefix, values in (("predicted", trajs["predicted"].fields(basis)[k]),
                                   ("true", fields[k])):
                name = _field_name(prefix, k * exp.delta)
                FieldSample(basis.grid, values).to_csv(out / name)
                written.append(name)
        _update_manifest(out, exp, "predict", written, time.perf_counter() - start,
                         {"steps": steps, "reference_failures": failures})
    return trajs


def _write_series(path: Path, columns: dict[str, np.ndarray]) -> None:
    names = list(columns)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(names)
        for row in zip(*columns.values()):
            w.writerow(["" if not np.isfinite(x) else repr(float(x)) for x in row])


def analyze(exp: ExperimentConfig, out):
    out = Path(out)
    _require(out, "analyze", [MODEL, REFERENCE_FIELDS, "trajectory_predicted.csv",
                              "trajectory_optimal-projection.csv"])
    with run_lock(out):
        start = time.perf_counter()
        basis, pde = exp.basis(), exp.pde()
        model = ResNet.load(out / MODEL)
        fields = np.load(out / REFERENCE_FIELDS)
        pred = Trajectory.from_csv(out / "trajectory_predicted.csv", "predicted")
        refs = {}
        for kind in ("optimal-projection", "galerkin", "exact-modal"):
            p = out / f"trajectory_{kind}.csv"
            if p.exists():
                refs[kind] = Trajectory.from_csv(p, kind)
        steps = pred.steps
        if fields.shape[0] != steps + 1:
            raise ValueError(f"{REFERENCE_FIELDS} has {fields.shape[0]} times, trajectory has {steps + 1}")

        an = exp.doc["analysis"]
        box = exp.box(basis)
        probe = box.lo + rng.uniform_rows(exp.doc["seed"], rng.STREAM_PROBE,
                                          range(an["probe_points"]), basis.n) * (box.hi - box.lo)
        description = (f"{an['probe_points']} points uniform in the sampling box "
                       f"(seed {exp.doc['seed']}, stream {rng.STREAM_PROBE})")
        report = theorem_bound_check(model, basis, pde, exp.delta, probe, None, steps,
                                     exp.solver(), description, fields=fields, prediction=pred)
        report.to_json(out / REPORT)
        if not report.decomposition_holds:
            raise ArithmeticError("field error exceeds coefficient error plus projection error")

        series = {
            "t": pred.times,
            "rel_err_field": np.array(report.rel_err_field, dtype=float),
            "rel_err_coeff": np.array(report.rel_err_coeff, dtype=float),
            "coeff_err": np.array(report.coeff_err, dtype=float),
            "eps_proj": np.array(report.eps_proj, dtype=float),
            "bound_rhs": np.array(report.bound_rhs, dtype=float),
        }
        if "galerkin" in refs:
            g = refs["galerkin"]
            series["rel_err_field_galerkin"] = relative_error(g.fields(basis), fields, basis)
        written = [REPORT, "error_series.csv"]
        _write_series(out / "error_series.csv", series)
        for j in range(basis.n):
            cols = {"t": pred.times, "predicted": pred.coeffs[:, j]}
            for kind, traj in refs.items():
                cols[kind] = traj.coeffs[:, j]
            name = f"coefficients_mode{j + 1:02d}.csv"
            _write_series(out / name, cols)
            written.append(name)
        summary = {"holds": report.holds, "solution_holds": report.solution_holds,
                   "final_rel_err_field": report.rel_err_field[-1]}
        if pde.linear and an.get("bound_steps"):
            k = min(an["bound_steps"], steps)
            prop = exact_modal_bound_check(basis, pde, exp.delta, exp.initial_condition(basis), k)
            summary["exact_modal_bound_holds"] = prop["holds"]
        if "galerkin" in refs:
            summary["mode_l2_predicted"] = np.sqrt(np.mean((pred.coeffs - refs["optimal-projection"].coeffs) ** 2, 0)).tolist()
            summary["mode_l2_galerkin"] = np.sqrt(np.mean((refs["galerkin"].coeffs - refs["optimal-projection"].coeffs) ** 2, 0)).tolist()
        (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
        written.append("summary.json")
        _update_manifest(out, exp, "analyze", written, time.perf_counter() - start)
    return report, summary


def run_all(exp: ExperimentConfig, out, progress=None):
    generate(exp, out)
    train_model(exp, out, progress=progress)
    predict(exp, out)
    return analyze(exp, out)
