"""Fixed-seed scenario batteries: rendering reproduction and attack separation."""

import hashlib
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import evaluate
from .io import atomic_write_bytes, write_json, write_report
from .optics import phase_slope_constant
from .simulate import ScenarioSpec, apply_attack, render_sequence
from .verify import verify_sequence

__all__ = [
    "DISTANCES",
    "rendering_battery",
    "attack_battery",
    "run_rendering_battery",
    "run_attack_battery",
    "frames_digest",
    "worker_count",
]

log = logging.getLogger(__name__)

DISTANCES = tuple(range(1100, 1701, 100))
ATTACKS = (("frozen", None), ("drift", 0.3), ("gain", 0.3), ("lag", 10))


def worker_count():
    """Thread cap from ``MOIRE_THREADS`` (unset or 0 means one per CPU)."""
    try:
        n = int(os.environ.get("MOIRE_THREADS", "0"))
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def frames_digest(frames):
    """SHA-256 over the frames in order, row-major uint8 bytes."""
    h = hashlib.sha256()
    for f in np.asarray(frames, dtype=np.uint8):
        h.update(f.tobytes())
    return h.hexdigest()


def rendering_battery(seeds=range(10), n_frames=120, jitter=2.0, n_translation=10):
    """``[(group, source_id, spec), ...]`` for the distance sweep plus a pure-translation group."""
    out = []
    for D in DISTANCES:
        for s in seeds:
            spec = ScenarioSpec(distance_z=float(D), n_frames=n_frames, rotation_jitter_deg=jitter,
                                seed=1000 * D + s)
            out.append(("rendering", f"render_D{D}_s{s:02d}", spec))
    for i in range(n_translation):
        D = DISTANCES[i % len(DISTANCES)]
        spec = ScenarioSpec(distance_z=float(D), n_frames=n_frames, rotation_jitter_deg=0.0, seed=9000 + i)
        out.append(("translation", f"translate_D{D}_s{i:02d}", spec))
    return out


def attack_battery(n_per_attack=10, n_frames=120, jitter=2.0):
    """Authentic sweep sequences, each paired with one attack kind.

    Returns ``[(source_id, spec, attack_kind, attack_param), ...]``. The
    oscillating path makes delayed or drifting phase schedules
    decorrelate from the displacement within a single window.
    """
    out = []
    i = 0
    for kind, param in ATTACKS:
        for _ in range(n_per_attack):
            D = DISTANCES[i % len(DISTANCES)]
            spec = ScenarioSpec(distance_z=float(D), n_frames=n_frames, rotation_jitter_deg=jitter,
                                seed=5000 + i, path="sweep", start_offset=(250.0, 0.0),
                                end_offset=(-250.0, 0.0), sweep_cycles=3.0)
            out.append((f"seq{i:03d}", spec, kind, param))
            i += 1
    return out


def _phase_rms(report, manifest):
    truth = np.array([r["true_phase_rad"] for r in manifest["frames"]])
    if report.traces is None:
        return None, False
    err = report.traces["phase"] - (truth - truth[0])
    err = err - err.mean()
    return float(np.sqrt(np.mean(err**2))), bool(np.all(np.abs(np.diff(truth)) < np.pi))


def _write_seq(out_dir, sid, manifest, reports, digest):
    if out_dir is None:
        return
    d = Path(out_dir) / sid
    write_json(d / "manifest.json", manifest)
    for name, rep in reports.items():
        write_report(d / name, rep)
    atomic_write_bytes(d / "frames.sha256", (digest + "\n").encode("ascii"))


def _run_rendering_item(item, out_dir):
    group, sid, spec = item
    frames, manifest = render_sequence(spec)
    approx = verify_sequence(frames, manifest, source_id=sid)
    exact = verify_sequence(frames, manifest, intrinsics="exact", source_id=sid)
    rms, nyq_ok = _phase_rms(approx, manifest)
    expected = -phase_slope_constant(spec.grating.gap, spec.grating.p_rear, spec.camera.focal_px)
    digest = frames_digest(frames)
    _write_seq(out_dir, sid, manifest, {"report.json": approx, "report_exact.json": exact}, digest)
    log.info("%s s=%.5f", sid, approx.best_correlation)
    return {
        "source_id": sid,
        "group": group,
        "distance_z": spec.distance_z,
        "seed": spec.seed,
        "best_correlation": approx.best_correlation,
        "global_rho": approx.global_rho,
        "best_correlation_exact": exact.best_correlation,
        "slope_exact": exact.slope_fit,
        "slope_expected": expected,
        "phase_rms": rms,
        "steps_below_pi": nyq_ok,
        "excluded": approx.excluded,
        "frames_sha256": digest,
    }


def _group_summary(rows):
    s = np.array([r["best_correlation"] for r in rows], dtype=float)
    return {"n": len(rows), "mean_s": float(np.mean(s)), "min_s": float(np.min(s)), "max_s": float(np.max(s))}


def run_rendering_battery(out_dir=None, items=None, workers=None):
    """Render, verify and summarise the rendering battery.

    With ``out_dir`` every sequence writes its manifest, both reports and
    a frame digest (frames themselves are not stored), and ``summary.json``
    collects per-sequence rows and per-group means.
    """
    items = rendering_battery() if items is None else items
    workers = workers or worker_count()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(lambda it: _run_rendering_item(it, out_dir), items))
    groups = sorted({r["group"] for r in rows})
    summary = {
        "groups": {g: _group_summary([r for r in rows if r["group"] == g]) for g in groups},
        "sequences": rows,
    }
    if out_dir is not None:
        write_json(Path(out_dir) / "summary.json", summary)
    return summary


def _run_attack_item(item, out_dir):
    sid, spec, kind, param = item
    frames, manifest = render_sequence(spec)
    forged, fmanifest = apply_attack(frames, manifest, kind, param)
    real_id, fake_id = f"{sid}_authentic", f"{sid}_{kind}"
    real = verify_sequence(frames, manifest, source_id=real_id)
    fake = verify_sequence(forged, fmanifest, source_id=fake_id)
    _write_seq(out_dir, real_id, manifest, {"report.json": real}, frames_digest(frames))
    _write_seq(out_dir, fake_id, fmanifest, {"report.json": fake}, frames_digest(forged))
    log.info("%s s=%.5f  %s s=%.5f", real_id, real.best_correlation, fake_id, fake.best_correlation)
    rows = []
    for rid, rep, man, y, k in ((real_id, real, manifest, 1, None), (fake_id, fake, fmanifest, 0, kind)):
        rms, nyq_ok = _phase_rms(rep, man)
        rows.append({"source_id": rid, "label": y, "kind": k or "authentic", "distance_z": spec.distance_z,
                     "best_correlation": rep.best_correlation, "global_rho": rep.global_rho,
                     "excluded": rep.excluded, "phase_rms": rms, "steps_below_pi": nyq_ok})
    return [(real_id, real, 1, None, rows[0]), (fake_id, fake, 0, kind, rows[1])]


def run_attack_battery(out_dir=None, items=None, workers=None):
    """Authentic-vs-attack scores, ROC/AUC and the selected threshold."""
    items = attack_battery() if items is None else items
    workers = workers or worker_count()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pairs = [p for ps in pool.map(lambda it: _run_attack_item(it, out_dir), items) for p in ps]
    reports = {sid: rep for sid, rep, _, _, _ in pairs}
    labels = {sid: y for sid, _, y, _, _ in pairs}
    metrics = evaluate.evaluate_reports(reports, labels)
    by_kind = {}
    for sid, rep, y, kind, _ in pairs:
        by_kind.setdefault(kind or "authentic", []).append(rep.best_correlation)
    metrics["per_kind"] = {k: {"n": len(v), "mean_s": float(np.mean(v)), "min_s": float(np.min(v)),
                               "max_s": float(np.max(v))} for k, v in sorted(by_kind.items())}
    metrics["sequences"] = sorted((row for *_, row in pairs), key=lambda r: r["source_id"])
    if out_dir is not None:
        write_json(Path(out_dir) / "metrics.json", metrics)
        write_json(Path(out_dir) / "labels.json", labels)
    return metrics
