"""File formats: PGM frames, canonical JSON, schemas and sequence directories."""

import json
import math
import os
import re
import shutil
import tempfile
from pathlib import Path

import jsonschema
import numpy as np

from .errors import MissingManifest, SchemaViolation, ValidationError
from .simulate import MANIFEST_VERSION

__all__ = [
    "read_pgm",
    "write_pgm",
    "canonical_json",
    "atomic_write_bytes",
    "write_json",
    "read_json",
    "validate",
    "MANIFEST_SCHEMA",
    "REPORT_SCHEMA",
    "CONFIG_SCHEMA",
    "SCENARIO_SCHEMA",
    "manifest_roundtrip",
    "read_manifest",
    "write_sequence",
    "read_sequence",
    "write_report",
    "frame_name",
]

FRAME_PATTERN = "frame_{:05d}.pgm"


def frame_name(i):
    return FRAME_PATTERN.format(i)


# ----------------------------------------------------------------------- PGM

_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


def write_pgm(path, image):
    """Write an 8-bit grayscale image as binary PGM (P5, maxval 255)."""
    img = np.asarray(image)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValidationError("PGM frames must be 2D uint8 arrays")
    h, w = img.shape
    atomic_write_bytes(path, b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())


def read_pgm(path):
    data = Path(path).read_bytes()
    pos, vals = 0, []
    for _ in range(4):
        m = _PGM_TOKEN.match(data, pos)
        if not m:
            raise ValidationError(f"{path}: truncated PGM header")
        vals.append(m.group(1))
        pos = m.end()
    if vals[0] != b"P5":
        raise ValidationError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(v) for v in vals[1:])
    if maxval != 255:
        raise ValidationError(f"{path}: only maxval 255 is supported")
    pos += 1  # single whitespace byte after maxval
    body = data[pos:pos + w * h]
    if len(body) != w * h:
        raise ValidationError(f"{path}: pixel data truncated")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


# ---------------------------------------------------------------------- JSON

def _plain(obj):
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def canonical_json(obj):
    """Sorted keys, shortest round-trip float repr, non-finite numbers as null."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False, ensure_ascii=True) + "\n"


def atomic_write_bytes(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    atomic_write_bytes(path, canonical_json(obj).encode("ascii"))


def read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None


# ------------------------------------------------------------------- schemas

_num = {"type": "number"}
_vec = lambda n: {"type": "array", "items": _num, "minItems": n, "maxItems": n}  # noqa: E731

GRATING_SCHEMA = {
    "type": "object",
    "required": ["p_front", "p_rear", "gap", "line_axis"],
    "additionalProperties": False,
    "properties": {
        "p_front": {"type": "number", "exclusiveMinimum": 0},
        "p_rear": {"type": "number", "exclusiveMinimum": 0},
        "gap": {"type": "number", "exclusiveMinimum": 0},
        "line_axis": _vec(2),
    },
}

BOARD_SCHEMA = {
    "type": "object",
    "required": ["size", "fringe_region", "marker_cell", "marker_black", "board_intensity"],
    "additionalProperties": False,
    "properties": {
        "size": _vec(2),
        "fringe_region": _vec(2),
        "marker_cell": _num,
        "marker_black": _num,
        "board_intensity": _num,
        "layout": {"type": "array", "items": _vec(3), "minItems": 4, "maxItems": 4},
        "centroid": _vec(3),
    },
}

CAMERA_SCHEMA = {
    "type": "object",
    "required": ["width", "height", "focal_px"],
    "additionalProperties": False,
    "properties": {
        "width": {"type": "integer", "minimum": 1},
        "height": {"type": "integer", "minimum": 1},
        "focal_px": {"type": "number", "exclusiveMinimum": 0},
        "principal_point": {"anyOf": [_vec(2), {"type": "null"}]},
        "alpha": {"type": ["number", "null"]},
    },
}

_SCENARIO_FIELDS = {
    "motion_kind": {"enum": ["camera_moving", "board_moving", "both_moving"]},
    "distance_z": {"type": "number", "exclusiveMinimum": 0},
    "n_frames": {"type": "integer", "minimum": 2},
    "rotation_jitter_deg": {"type": "number", "minimum": 0, "maximum": 5},
    "noise_sigma": {"type": "number", "minimum": 0},
    "supersampling": {"type": "integer", "minimum": 4},
    "seed": {"type": "integer"},
    "start_offset": _vec(2),
    "end_offset": _vec(2),
    "path": {"enum": ["linear", "sweep"]},
    "sweep_cycles": _num,
    "pan_sweep_deg": _num,
    "optical_lowpass_px": {"type": "number", "minimum": 0},
    "background": _num,
}

SCENARIO_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": dict(_SCENARIO_FIELDS, grating=GRATING_SCHEMA, board=BOARD_SCHEMA, camera=CAMERA_SCHEMA),
}

_FRAME_RECORD = {
    "type": "object",
    "required": ["index", "rotation", "position", "corners_px"],
    "additionalProperties": False,
    "properties": {
        "index": {"type": "integer", "minimum": 0},
        "rotation": _vec(9),
        "position": _vec(3),
        "camera_world": _vec(3),
        "board_world": _vec(3),
        "corners_px": {"type": "array", "items": _vec(2), "minItems": 4, "maxItems": 4},
        "true_phase_rad": {"type": ["number", "null"]},
    },
}

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["version", "grating", "board", "camera", "frames", "label", "fringe_axis"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": MANIFEST_VERSION},
        "grating": GRATING_SCHEMA,
        "board": BOARD_SCHEMA,
        "camera": CAMERA_SCHEMA,
        "scenario": {
            "type": "object",
            "additionalProperties": False,
            "properties": _SCENARIO_FIELDS,
        },
        "fringe_axis": _vec(2),
        "label": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["authentic", "attack"]},
                "attack_params": {"type": ["object", "null"]},
            },
        },
        "frames": {"type": "array", "items": _FRAME_RECORD, "minItems": 2},
    },
}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["mode", "window", "rho_windows", "best_correlation", "global_rho", "slope_fit",
                 "warnings", "excluded", "decision", "tau"],
    "properties": {
        "mode": {"enum": ["tracked", "detect"]},
        "window": {"type": "integer", "minimum": 3},
        "rho_windows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["start", "rho"],
                "properties": {"start": {"type": "integer"},
                               "rho": {"anyOf": [{"type": "null"}, {"type": "number", "minimum": -1, "maximum": 1}]}},
            },
        },
        "best_correlation": {"anyOf": [{"type": "null"}, {"type": "number", "minimum": 0, "maximum": 1}]},
        "global_rho": {"type": ["number", "null"]},
        "slope_fit": {"type": ["number", "null"]},
        "warnings": {"type": "array", "items": {"type": "string"}},
        "excluded": {"type": "boolean"},
        "decision": {"enum": ["real", "fake", None]},
        "tau": {"type": ["number", "null"]},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "scenario": SCENARIO_SCHEMA,
        "seeds": {"type": "array", "items": {"type": "integer"}},
        "outputs": {"type": "object", "additionalProperties": {"type": "string"}},
        "verifier": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["tracked", "detect"]},
                "window": {"type": "integer", "minimum": 3},
                "tau": {"type": ["number", "null"]},
                "intrinsics": {"enum": ["approx", "exact"]},
                "alpha": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "evaluation": {"type": "object"},
    },
}


def _path_str(path):
    return "/" + "/".join(str(p) for p in path) if path else "/"


def validate(obj, schema):
    """Raise :class:`SchemaViolation` naming the first offending field path."""
    v = jsonschema.Draft202012Validator(schema)
    errs = sorted(v.iter_errors(obj), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errs:
        e = errs[0]
        path = _path_str(e.absolute_path)
        raise SchemaViolation(e.message, path)
    return obj


def _check_manifest(m):
    validate(m, MANIFEST_SCHEMA)
    for i, r in enumerate(m["frames"]):
        if r["index"] != i:
            raise SchemaViolation(f"expected {i}", f"/frames/{i}/index")
    n = m.get("scenario", {}).get("n_frames")
    if n is not None and n != len(m["frames"]):
        raise SchemaViolation("record count differs from scenario n_frames", "/frames")
    return m


def read_manifest(path):
    if not Path(path).is_file():
        raise MissingManifest(f"no manifest at {path}")
    return _check_manifest(read_json(path))


def manifest_roundtrip(path):
    """Parse, validate, serialise and re-parse a manifest; returns the parsed value."""
    m = read_manifest(path)
    again = json.loads(canonical_json(m))
    if again != _plain(m):
        raise ValidationError("manifest does not survive a canonical round trip")
    return again


# ---------------------------------------------------------------- sequences

def _replace_dir(tmp, out):
    out = Path(out)
    if out.exists():
        if not out.is_dir():
            raise ValidationError(f"{out} exists and is not a directory")
        if any(out.iterdir()) and not (out / "manifest.json").is_file():
            raise ValidationError(f"{out} is a non-empty directory that is not a sequence")
        shutil.rmtree(out)
    os.replace(tmp, out)


def write_sequence(out_dir, frames, manifest):
    """Write ``frame_%05d.pgm`` files plus ``manifest.json`` into ``out_dir``.

    Everything is written into a sibling temp directory first and moved in
    place at the end, so a failure leaves no partial sequence behind.
    """
    frames = np.asarray(frames)
    if frames.ndim != 3 or len(frames) != len(manifest["frames"]):
        raise ValidationError("frame count must match manifest records")
    _check_manifest(_plain(manifest))
    out = Path(out_dir)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = tempfile.mkdtemp(dir=out.parent, prefix="." + out.name + ".")
    try:
        for i, f in enumerate(frames):
            write_pgm(Path(tmp) / frame_name(i), f)
        write_json(Path(tmp) / "manifest.json", manifest)
        _replace_dir(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return out


def read_sequence(seq_dir):
    d = Path(seq_dir)
    manifest = read_manifest(d / "manifest.json")
    frames = []
    for i in range(len(manifest["frames"])):
        p = d / frame_name(i)
        if not p.is_file():
            raise ValidationError(f"{p} missing")
        frames.append(read_pgm(p))
    if len({f.shape for f in frames}) != 1:
        raise ValidationError("frames differ in size")
    cam = manifest["camera"]
    if frames[0].shape != (cam["height"], cam["width"]):
        raise ValidationError("frame size differs from manifest camera")
    return np.stack(frames), manifest


def write_report(path, report):
    d = report.to_dict() if hasattr(report, "to_dict") else report
    validate(_plain(d), REPORT_SCHEMA)
    write_json(path, d)
