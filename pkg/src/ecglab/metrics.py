"""Per-indicator evaluation: AUC, bootstrap CI, Youden operating point, report.

AUC is the Mann-Whitney statistic with ties counted one half. Confidence
intervals come from a stratified percentile bootstrap (positives and
negatives resampled separately).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from ._util import substream
from .errors import UndefinedMetricError

STRONG = 0.65
MODERATE = 0.55
N_BOOT = 2000
NOT_EVALUABLE = "not evaluable"

REPORT_COLUMNS = ["lab_name", "range", "n_all", "n_positive", "auc", "ci_low", "ci_high",
                  "sensitivity", "specificity", "f1", "window",
                  "segment_auc", "operating_threshold", "class_id", "stratum"]


def _binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    labels = labels.astype(bool)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise UndefinedMetricError("need at least one positive and one negative label")
    return scores, labels


def aggregate_event_scores(segment_probs):
    """Mean probability per class over an event's segments."""
    p = np.asarray(segment_probs, dtype=np.float64)
    if p.size == 0 or p.shape[0] == 0:
        raise ValueError("an event needs at least one segment")
    if p.ndim == 1:
        p = p[None, :]
    return p.mean(axis=0)


def auc(scores, labels):
    scores, labels = _binary(scores, labels)
    n_pos = labels.sum()
    n_neg = labels.size - n_pos
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _auc_rows(pos, neg):
    # pos: (B, P), neg: (B, N) -> AUC per row
    n_pos, n_neg = pos.shape[1], neg.shape[1]
    ranks = rankdata(np.concatenate([pos, neg], axis=1), axis=1)
    u = ranks[:, :n_pos].sum(axis=1) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def auc_ci(scores, labels, n_boot=N_BOOT, seed=0, alpha=0.05, rng=None):
    """Stratified percentile bootstrap interval for :func:`auc`."""
    if n_boot < 100:
        raise ValueError("n_boot must be at least 100")
    scores, labels = _binary(scores, labels)
    pos, neg = scores[labels], scores[~labels]
    rng = rng if rng is not None else substream(seed, "bootstrap")
    boots = np.empty(n_boot)
    chunk = max(1, 2_000_000 // scores.size)
    for i in range(0, n_boot, chunk):
        b = min(chunk, n_boot - i)
        bp = pos[rng.integers(0, pos.size, size=(b, pos.size))]
        bn = neg[rng.integers(0, neg.size, size=(b, neg.size))]
        boots[i:i + b] = _auc_rows(bp, bn)
    low, high = np.percentile(boots, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return float(low), float(high)


def confusion_metrics(scores, labels, threshold_rule="youden"):
    """``(sensitivity, specificity, f1, threshold)`` at the Youden-optimal cut.

    A score is called positive when ``score >= threshold``; candidate
    thresholds are the observed scores and ties in J go to the lower one.
    """
    if threshold_rule != "youden":
        raise ValueError(f"unknown threshold rule {threshold_rule!r}")
    scores, labels = _binary(scores, labels)
    P = int(labels.sum())
    N = labels.size - P
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    # last index of each run of equal scores: everything up to it is called positive
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp, fp, cuts = tp[ends], fp[ends], s[ends]
    # J * P * N in exact integers: tp*N + (N - fp)*P - P*N
    j_scaled = tp * N - fp * P
    best = j_scaled.max()
    i = np.flatnonzero(j_scaled == best)[-1]  # descending cuts: last = lowest threshold
    tp_i, fp_i = int(tp[i]), int(fp[i])
    fn_i = P - tp_i
    sens = tp_i / P
    spec = (N - fp_i) / N
    f1 = 2 * tp_i / (2 * tp_i + fp_i + fn_i)
    return sens, spec, f1, float(cuts[i])


@dataclass
class IndicatorResult:
    class_id: int
    window: float
    n_all: int
    n_positive: int
    lab_name: str = ""
    range: str = ""
    auc: float = math.nan
    ci_low: float = math.nan
    ci_high: float = math.nan
    sensitivity: float = math.nan
    specificity: float = math.nan
    f1: float = math.nan
    operating_threshold: float = math.nan
    segment_auc: float = math.nan
    extra: dict = field(default_factory=dict)

    @property
    def evaluable(self):
        return not math.isnan(self.auc)


@dataclass
class StratifiedReport:
    strong: list
    moderate: list
    weak: list
    not_evaluable: list = field(default_factory=list)

    def counts(self):
        return len(self.strong), len(self.moderate), len(self.weak)


def stratum(auc_value):
    if auc_value >= STRONG:
        return "strong"
    if auc_value >= MODERATE:
        return "moderate"
    return "weak"


def stratify(results) -> StratifiedReport:
    rep = StratifiedReport([], [], [], [])
    for r in results:
        if not r.evaluable:
            rep.not_evaluable.append(r)
        else:
            getattr(rep, stratum(r.auc)).append(r)
    return rep


def evaluate_indicator(class_id, event_scores, event_labels, window, *, lab_name="", range_="",
                       segment_scores=None, segment_labels=None, n_boot=N_BOOT, seed=0):
    """Score one class over events whose label is observed (-1 rows are dropped).

    Returns a result with NaN metrics when only one class is present.
    """
    event_scores = np.asarray(event_scores, dtype=np.float64)
    event_labels = np.asarray(event_labels)
    keep = event_labels != -1
    s, y = event_scores[keep], event_labels[keep]
    res = IndicatorResult(class_id, window, int(keep.sum()), int((y == 1).sum()),
                          lab_name=lab_name, range=range_)
    if res.n_positive == 0 or res.n_positive == res.n_all:
        return res
    res.auc = auc(s, y)
    rng = substream(seed, "bootstrap", class_id, window)
    res.ci_low, res.ci_high = auc_ci(s, y, n_boot=n_boot, rng=rng)
    res.sensitivity, res.specificity, res.f1, res.operating_threshold = confusion_metrics(s, y)
    if segment_scores is not None:
        ss = np.asarray(segment_scores, dtype=np.float64)
        sl = np.asarray(segment_labels)
        m = sl != -1
        try:
            res.segment_auc = auc(ss[m], sl[m])
        except UndefinedMetricError:
            pass
    return res


def evaluate_window(event_probs, event_labels, table, window, *, segment_probs=None,
                    segment_labels=None, n_boot=N_BOOT, seed=0):
    """All classes for one window.

    ``event_probs``/``event_labels`` are (E x C); the optional segment arrays
    are (S x C) and feed the secondary per-segment AUC.
    """
    event_probs = np.asarray(event_probs)
    event_labels = np.asarray(event_labels)
    out = []
    for e in table.entries:
        j = e.class_id
        out.append(evaluate_indicator(
            j, event_probs[:, j], event_labels[:, j], window,
            lab_name=e.lab_name, range_=e.range_label,
            segment_scores=None if segment_probs is None else segment_probs[:, j],
            segment_labels=None if segment_labels is None else segment_labels[:, j],
            n_boot=n_boot, seed=seed))
    return out


def sort_results(results):
    """Descending AUC, non-evaluable rows last; ties by window then class id."""
    return sorted(results, key=lambda r: (not r.evaluable, -r.auc if r.evaluable else 0.0,
                                          -r.window, r.class_id))


def _fmt(x):
    if isinstance(x, float):
        return "NA" if math.isnan(x) else f"{x:.6f}"
    return str(x)


def _row(r: IndicatorResult):
    return {
        "lab_name": r.lab_name, "range": r.range, "n_all": r.n_all, "n_positive": r.n_positive,
        "auc": r.auc, "ci_low": r.ci_low, "ci_high": r.ci_high,
        "sensitivity": r.sensitivity, "specificity": r.specificity, "f1": r.f1,
        "window": int(r.window) if float(r.window).is_integer() else r.window,
        "segment_auc": r.segment_auc, "operating_threshold": r.operating_threshold,
        "class_id": r.class_id,
        "stratum": stratum(r.auc) if r.evaluable else NOT_EVALUABLE,
    }


def write_results_csv(results, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in sort_results(results):
            row = _row(r)
            w.writerow([_fmt(row[c]) for c in REPORT_COLUMNS])
    return path


def read_results_csv(path):
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            def num(k):
                return math.nan if row[k] == "NA" else float(row[k])
            out.append(IndicatorResult(
                class_id=int(row["class_id"]), window=float(row["window"]),
                n_all=int(row["n_all"]), n_positive=int(row["n_positive"]),
                lab_name=row["lab_name"], range=row["range"], auc=num("auc"),
                ci_low=num("ci_low"), ci_high=num("ci_high"), sensitivity=num("sensitivity"),
                specificity=num("specificity"), f1=num("f1"),
                operating_threshold=num("operating_threshold"), segment_auc=num("segment_auc")))
    return out


def format_markdown(results, title=None):
    lines = []
    if title:
        lines += [f"## {title}", ""]
    rep = stratify(results)
    s, m, w = rep.counts()
    lines.append(f"Strong (AUC >= {STRONG}): {s}; moderate ({MODERATE} <= AUC < {STRONG}): {m}; "
                 f"weak (AUC < {MODERATE}): {w}; not evaluable: {len(rep.not_evaluable)}.")
    lines.append("Operating point: Youden's J maximised on the evaluation set itself.")
    lines.append("")
    lines.append("| " + " | ".join(REPORT_COLUMNS) + " |")
    lines.append("|" + "---|" * len(REPORT_COLUMNS))
    for r in sort_results(results):
        row = _row(r)
        lines.append("| " + " | ".join(_fmt(row[c]).replace("|", "\\|") for c in REPORT_COLUMNS)
                     + " |")
    return "\n".join(lines) + "\n"
