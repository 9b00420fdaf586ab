"""``moirekit`` command line: simulate, attack, verify, evaluate, reproduce batteries."""

import argparse
import csv
import glob
import logging
import shutil
import sys
from pathlib import Path

from . import evaluate, experiments, io
from .errors import MoireError, PipelineError, ValidationError
from .simulate import ATTACK_KINDS, ScenarioSpec, apply_attack, render_sequence
from .verify import verify

log = logging.getLogger("moirekit")

EXIT_OK, EXIT_VALIDATION, EXIT_PIPELINE = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(f"{self.prog}: {message}")


def _load_config(path):
    cfg = io.validate(io.read_json(path), io.CONFIG_SCHEMA)
    return cfg


def cmd_simulate(args):
    cfg = _load_config(args.config) if args.config else {}
    scen = dict(cfg.get("scenario", {}))
    if args.seed is not None:
        scen["seed"] = args.seed
    elif cfg.get("seeds"):
        scen["seed"] = cfg["seeds"][0]
    spec = ScenarioSpec.from_dict(scen)
    frames, manifest = render_sequence(spec)
    io.write_sequence(args.out, frames, manifest)
    print(f"wrote {len(frames)} frames to {args.out}")


def cmd_attack(args):
    frames, manifest = io.read_sequence(args.inp)
    donor = io.read_manifest(Path(args.donor) / "manifest.json") if args.donor else None
    out, m = apply_attack(frames, manifest, args.kind, args.param, donor=donor, seed=args.seed)
    io.write_sequence(args.out, out, m)
    print(f"wrote {args.kind} attack to {args.out}")


def cmd_verify(args):
    if not (Path(args.inp) / "manifest.json").is_file():
        raise ValidationError(f"{args.inp}: manifest.json not found")
    rep = verify(args.inp, mode=args.mode, window=args.window, tau=args.tau,
                 intrinsics=args.intrinsics, alpha=args.alpha, delta_mode=args.delta)
    io.write_report(args.out, rep)
    s = rep.best_correlation
    print(f"best_correlation={s:.6f} excluded={rep.excluded} decision={rep.decision}")


def _read_labels(path):
    labels = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            if len(row) < 2:
                raise ValidationError(f"{path}: expected 'source_id,label' rows")
            sid, lab = row[0].strip(), row[1].strip()
            if sid == "source_id":
                continue
            labels[sid] = lab
    return labels


def _source_id(path, rep):
    if rep.get("source_id"):
        return rep["source_id"]
    p = Path(path)
    return p.parent.name if p.name == "report.json" else p.stem


def cmd_evaluate(args):
    paths = sorted(glob.glob(args.reports, recursive=True))
    if not paths:
        raise ValidationError(f"no reports match {args.reports!r}")
    reports = {}
    for p in paths:
        rep = io.validate(io.read_json(p), io.REPORT_SCHEMA)
        sid = _source_id(p, rep)
        if sid in reports:
            raise ValidationError(f"duplicate source id {sid!r} ({p})")
        reports[sid] = rep
    metrics = evaluate.evaluate_reports(reports, _read_labels(args.labels))
    io.write_json(args.out, metrics)
    print(f"auc={metrics['auc']:.4f} tau*={metrics['tau_star']:.6f} "
          f"accuracy={metrics['accuracy_at_tau_star']:.4f}")


def cmd_reproduce_rendering(args):
    summary = experiments.run_rendering_battery(args.out)
    for g, st in summary["groups"].items():
        print(f"{g}: n={st['n']} mean_s={st['mean_s']:.6f} min_s={st['min_s']:.6f}")


def cmd_reproduce_attacks(args):
    m = experiments.run_attack_battery(args.out)
    for k, st in m["per_kind"].items():
        print(f"{k}: n={st['n']} mean_s={st['mean_s']:.6f} min_s={st['min_s']:.6f} max_s={st['max_s']:.6f}")
    print(f"auc={m['auc']:.4f} tau*={m['tau_star']:.6f} accuracy={m['accuracy_at_tau_star']:.4f}")


def build_parser():
    p = _Parser(prog="moirekit", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="render an authentic sequence")
    s.add_argument("--config", help="experiment config JSON (its 'scenario' block is used)")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate, outputs=("out",))

    a = sub.add_parser("attack", help="forge the fringe phase of a sequence")
    a.add_argument("--in", dest="inp", required=True)
    a.add_argument("--kind", required=True, choices=ATTACK_KINDS)
    a.add_argument("--param", type=float)
    a.add_argument("--donor")
    a.add_argument("--seed", type=int)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_attack, outputs=("out",))

    v = sub.add_parser("verify", help="score a sequence")
    v.add_argument("--in", dest="inp", required=True)
    v.add_argument("--mode", choices=("tracked", "detect"), default="tracked")
    v.add_argument("--window", type=int, default=30)
    v.add_argument("--tau", type=float)
    v.add_argument("--intrinsics", choices=("approx", "exact"), default="approx")
    v.add_argument("--alpha", type=float, default=1.0)
    v.add_argument("--delta", action="store_true", help="correlate per-frame increments instead")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_verify, outputs=("out",))

    e = sub.add_parser("evaluate", help="ROC/AUC and threshold selection over reports")
    e.add_argument("--reports", required=True, help="glob of report JSON files")
    e.add_argument("--labels", required=True, help="CSV of source_id,label")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate, outputs=("out",))

    r = sub.add_parser("reproduce-rendering", help="distance sweep plus pure-translation battery")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_reproduce_rendering, outputs=("out",))

    k = sub.add_parser("reproduce-attacks", help="authentic vs forged-phase battery")
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_reproduce_attacks, outputs=("out",))
    return p


def _cleanup(paths):
    for p in paths:
        if p.is_dir():
            shutil.rmtree(p, ignore_errors=True)
        elif p.exists():
            p.unlink()


def run_command(argv=None):
    """Parse ``argv`` and run one subcommand; returns the exit status."""
    try:
        args = build_parser().parse_args(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    outs = [Path(getattr(args, o)) for o in args.outputs]
    fresh = [p for p in outs if not p.exists()]
    try:
        args.func(args)
    except (ValidationError, PipelineError, MoireError) as exc:
        _cleanup(fresh)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION if isinstance(exc, ValidationError) else EXIT_PIPELINE
    except OSError as exc:
        _cleanup(fresh)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def main():
    sys.exit(run_command())
