"""Score curation, threshold sweep, ROC/AUC and two-sample summary statistics."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMetrics, InsufficientSamples, MissingLabel, SingleClassOnly

__all__ = [
    "ScoreEntry",
    "ScoreSet",
    "ThresholdMetrics",
    "SummaryStats",
    "build_scoreset",
    "sweep_thresholds",
    "roc_auc",
    "select_threshold",
    "summary_stats",
    "evaluate_reports",
]

EDGE_STEP = 0.01


@dataclass(frozen=True)
class ScoreEntry:
    source_id: str
    score: float
    label: int
    excluded: bool


@dataclass
class ScoreSet:
    entries: list = field(default_factory=list)

    @property
    def included(self):
        return [e for e in self.entries if not e.excluded]

    @property
    def n_excluded(self):
        return sum(e.excluded for e in self.entries)

    @property
    def n_pos(self):
        return sum(e.label == 1 for e in self.included)

    @property
    def n_neg(self):
        return sum(e.label == 0 for e in self.included)

    def arrays(self):
        inc = self.included
        return np.array([e.score for e in inc], dtype=float), np.array([e.label for e in inc], dtype=int)


@dataclass(frozen=True)
class ThresholdMetrics:
    tau: float
    tp: int
    fn: int
    tn: int
    fp: int

    @property
    def tpr(self):
        return self.tp / (self.tp + self.fn)

    @property
    def tnr(self):
        return self.tn / (self.tn + self.fp)

    @property
    def fpr(self):
        return self.fp / (self.tn + self.fp)

    @property
    def accuracy(self):
        return (self.tp + self.tn) / (self.tp + self.fn + self.tn + self.fp)

    @property
    def balanced_accuracy(self):
        return 0.5 * (self.tpr + self.tnr)


@dataclass(frozen=True)
class SummaryStats:
    real_mean: float
    real_std: float
    real_n: int
    fake_mean: float
    fake_std: float
    fake_n: int
    welch_t: float
    welch_df: float
    cohens_d: float

    def per_class(self):
        return {
            "real": {"mean": self.real_mean, "std": self.real_std, "n": self.real_n},
            "fake": {"mean": self.fake_mean, "std": self.fake_std, "n": self.fake_n},
        }


def _score_of(report):
    if hasattr(report, "to_dict"):
        report = report.to_dict()
    s = report.get("best_correlation")
    s = float("nan") if s is None else float(s)
    return s, bool(report.get("excluded", False))


def _label_value(v):
    if isinstance(v, str):
        v = v.strip().lower()
        if v in ("1", "real", "authentic"):
            return 1
        if v in ("0", "fake", "attack", "synthetic"):
            return 0
        raise MissingLabel(f"unrecognised label {v!r}")
    if v in (0, 1):
        return int(v)
    raise MissingLabel(f"unrecognised label {v!r}")


def build_scoreset(reports, labels):
    """Pair reports with labels and apply the exclusion rule.

    Parameters
    ----------
    reports : mapping
        ``source_id -> report`` (a :class:`VerificationReport` or its dict).
    labels : mapping
        ``source_id -> label``; ``1``/``"real"`` for authentic, ``0``/``"fake"``
        for synthetic.

    Notes
    -----
    A report is excluded when its score is non-finite, exactly zero, or
    the verifier flagged it. Excluded entries keep ``score = 0.0`` when the
    original was non-finite so the set stays JSON-safe.
    """
    entries = []
    for sid in sorted(reports):
        if sid not in labels:
            raise MissingLabel(f"no label for {sid!r}")
        s, flagged = _score_of(reports[sid])
        excl = flagged or not math.isfinite(s) or s == 0.0
        entries.append(ScoreEntry(sid, s if math.isfinite(s) else 0.0, _label_value(labels[sid]), excl))
    return ScoreSet(entries)


def _require_both(ss):
    if ss.n_pos == 0 or ss.n_neg == 0:
        raise SingleClassOnly("need at least one included entry of each class")


def _metrics_at(scores, labels, tau):
    pred = scores >= tau
    pos = labels == 1
    return ThresholdMetrics(float(tau), int((pred & pos).sum()), int((~pred & pos).sum()),
                            int((~pred & ~pos).sum()), int((pred & ~pos).sum()))


def candidate_thresholds(scores):
    u = np.unique(scores)
    mids = (u[:-1] + u[1:]) / 2.0
    return np.concatenate([[u[0] - EDGE_STEP], mids, [u[-1] + EDGE_STEP]])


def sweep_thresholds(ss):
    """Metrics at every candidate threshold, in increasing ``tau`` order."""
    _require_both(ss)
    s, y = ss.arrays()
    return [_metrics_at(s, y, t) for t in candidate_thresholds(s)]


def roc_auc(ss):
    """ROC points ``[(fpr, tpr), ...]`` including both endpoints, and trapezoid AUC."""
    pts = {(0.0, 0.0), (1.0, 1.0)}
    pts.update((m.fpr, m.tpr) for m in sweep_thresholds(ss))
    roc = sorted(pts)
    x = np.array([p[0] for p in roc])
    y = np.array([p[1] for p in roc])
    return roc, float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def select_threshold(metrics):
    """Highest accuracy; ties go to higher balanced accuracy, then smaller ``tau``."""
    if not metrics:
        raise EmptyMetrics("no threshold metrics to choose from")
    return min(metrics, key=lambda m: (-m.accuracy, -m.balanced_accuracy, m.tau))


def summary_stats(real, fake):
    """Welch's t (with Welch-Satterthwaite df) and pooled-SD Cohen's d."""
    a = np.asarray(real, dtype=float)
    b = np.asarray(fake, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise InsufficientSamples("need at least two scores per class")
    return _stats_from_moments(a.mean(), a.std(ddof=1), len(a), b.mean(), b.std(ddof=1), len(b))


def _stats_from_moments(m1, s1, n1, m2, s2, n2):
    v1, v2 = s1**2 / n1, s2**2 / n2
    se = math.sqrt(v1 + v2)
    diff = m1 - m2
    t = diff / se if se > 0 else (0.0 if diff == 0 else math.copysign(math.inf, diff))
    den = (v1**2 / (n1 - 1) + v2**2 / (n2 - 1))
    df = (v1 + v2) ** 2 / den if den > 0 else float("nan")
    pooled = math.sqrt(((n1 - 1) * s1**2 + (n2 - 1) * s2**2) / (n1 + n2 - 2))
    d = diff / pooled if pooled > 0 else (0.0 if diff == 0 else math.copysign(math.inf, diff))
    return SummaryStats(float(m1), float(s1), int(n1), float(m2), float(s2), int(n2), float(t), float(df), float(d))


def evaluate_reports(reports, labels):
    """The full metrics bundle written to ``metrics.json``."""
    ss = build_scoreset(reports, labels)
    metrics = sweep_thresholds(ss)
    roc, auc = roc_auc(ss)
    best = select_threshold(metrics)
    s, y = ss.arrays()
    out = {
        "n_included": len(ss.included),
        "n_excluded": ss.n_excluded,
        "excluded_ids": [e.source_id for e in ss.entries if e.excluded],
        "auc": auc,
        "roc": [list(p) for p in roc],
        "tau_star": best.tau,
        "accuracy_at_tau_star": best.accuracy,
        "balanced_accuracy_at_tau_star": best.balanced_accuracy,
        "tpr_at_tau_star": best.tpr,
        "tnr_at_tau_star": best.tnr,
        "welch_t": None,
        "welch_df": None,
        "cohens_d": None,
        "per_class": {
            "real": {"n": int((y == 1).sum()), "mean": float(s[y == 1].mean())},
            "fake": {"n": int((y == 0).sum()), "mean": float(s[y == 0].mean())},
        },
    }
    try:
        st = summary_stats(s[y == 1], s[y == 0])
    except InsufficientSamples:
        return out
    out.update(welch_t=st.welch_t, welch_df=st.welch_df, cohens_d=st.cohens_d, per_class=st.per_class())
    return out
