"""Label relevance of singular directions and the explained-variance curve."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .dssa import truncated_svd
from .errors import AllZero, DegenerateInput

_TINY = 1e-300


def _betacf(a: float, b: float, x: float, max_iter: int = 500, eps: float = 1e-16) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def betainc_regularized(a: float, b: float, x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: float) -> float:
    """Two-sided tail probability of Student's t."""
    if math.isinf(t):
        return 0.0
    return betainc_regularized(df / 2.0, 0.5, df / (df + t * t))


def point_biserial(labels, scores) -> tuple[float, float]:
    """Pearson correlation of scores with 0/1 labels and its two-sided p-value.

    The p-value is clamped to the smallest positive float so it stays in (0, 1].
    """
    labels = np.asarray(labels, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    n = len(labels)
    if n != len(scores) or n < 3:
        raise DegenerateInput("need equal-length inputs with at least 3 samples")
    if not np.all((labels == 0) | (labels == 1)):
        raise DegenerateInput("labels must be 0/1")
    if labels.min() == labels.max():
        raise DegenerateInput("both classes must be present")
    sc = scores - scores.mean()
    if not np.any(sc):
        raise DegenerateInput("scores have zero variance")
    lc = labels - labels.mean()
    r = float(np.dot(sc, lc) / math.sqrt(np.dot(sc, sc) * np.dot(lc, lc)))
    r = max(-1.0, min(1.0, r))
    df = n - 2
    t = math.inf if abs(r) == 1.0 else r * math.sqrt(df / (1.0 - r * r))
    p = t_two_sided_p(abs(t), df)
    return r, min(max(p, np.finfo(float).tiny), 1.0)


def cumulative_explained_variance(sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0) or np.any(np.diff(sigma) > 0):
        raise ValueError("sigma must be non-negative and sorted descending")
    if len(sigma) == 0 or sigma[0] == 0:
        raise AllZero("all singular values are zero")
    energy = (sigma / sigma[0]) ** 2  # scaled first so tiny values do not underflow
    cev = np.minimum(np.cumsum(energy) / energy.sum(), 1.0)
    cev[-1] = 1.0
    return cev


@dataclass
class DirectionReport:
    direction: np.ndarray  # original singular-direction index, sorted by relevance
    abs_r: np.ndarray
    p_value: np.ndarray
    rank: np.ndarray  # 1 = most label-relevant
    top: np.ndarray
    sigma: np.ndarray  # singular value of each listed direction

    def __len__(self):
        return len(self.direction)


def rank_directions(features, labels, S: int) -> DirectionReport:
    """Project pooled features onto their right singular directions and rank by |r_pb|.

    Directions whose projections are constant get ``|r| = 0`` and ``p = 1``.
    """
    X = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    counts = np.bincount(labels.astype(int), minlength=2)
    if len(counts) != 2 or counts.min() < 3:
        raise DegenerateInput("rank_directions needs at least 3 samples per class")
    k = min(X.shape)
    f = truncated_svd(X, k)
    scores = X @ f.V
    abs_r = np.zeros(k)
    p = np.ones(k)
    for j in range(k):
        try:
            r, p[j] = point_biserial(labels, scores[:, j])
            abs_r[j] = abs(r)
        except DegenerateInput:
            pass
    order = np.argsort(-abs_r, kind="stable")
    return DirectionReport(
        direction=order,
        abs_r=abs_r[order],
        p_value=p[order],
        rank=np.arange(1, k + 1),
        top=np.arange(k) < S,
        sigma=f.sigma[order],
    )


def write_direction_csv(report: DirectionReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["direction", "abs_r_pb", "p_value", "rank", "top_s"])
        for d, r, p, k, t in zip(report.direction, report.abs_r, report.p_value, report.rank,
                                 report.top):
            w.writerow([int(d), f"{r:.10g}", f"{p:.10g}", int(k), int(t)])


def write_cev_csv(cev, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "cev"])
        for k, v in enumerate(cev, 1):
            w.writerow([k, f"{v:.10g}"])


def write_gnuplot(columns: dict, path) -> None:
    """Whitespace-separated columns with a ``#`` header line."""
    names = list(columns)
    rows = zip(*(columns[n] for n in names))
    with open(path, "w") as fh:
        fh.write("# " + " ".join(names) + "\n")
        for row in rows:
            fh.write(" ".join(f"{float(v):.10g}" for v in row) + "\n")
