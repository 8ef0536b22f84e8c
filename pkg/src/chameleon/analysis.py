"""Correlation estimates and inequality checks from paired station records.

The plain estimator is the Monte-Carlo form of the weighted correlation
integral: the mean over trials of ``s1 * s2 * w1 * w2`` with the hidden angle
uniform on the circle. Individual terms are bounded by pi/2, so estimates can
exceed 1 in magnitude by chance; such values are flagged, never clipped.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ArgumentError, GroupingError, InsufficientDataError, PairingError
from .station import RecordSet

PLAIN = "plain"
SELF_NORMALIZED = "self-normalized"
ESTIMATORS = (PLAIN, SELF_NORMALIZED)

CHSH_BOUND = 2.0
# per-trial terms lie in [-pi/2, pi/2]; used as the spread bound when n == 1
TERM_BOUND = math.pi / 2
DEFAULT_MIN_COUNT = 100

Selection = Callable[[np.ndarray], np.ndarray] | np.ndarray | None


@dataclass(frozen=True)
class CorrelationEstimate:
    a: float
    b: float
    estimate: float
    stderr: float
    count: int
    estimator: str = PLAIN
    low_count: bool = False

    @property
    def exceeds_unit(self) -> bool:
        return abs(self.estimate) > 1.0

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "count": self.count,
            "estimator": self.estimator,
            "low_count": self.low_count,
            "exceeds_unit": self.exceeds_unit,
        }


@dataclass(frozen=True)
class MeanEstimate:
    estimate: float
    stderr: float
    count: int

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "count": self.count}


@dataclass(frozen=True)
class ChshResult:
    settings: tuple[float, float, float, float]
    estimates: tuple[CorrelationEstimate, ...]
    statistic: float
    stderr: float
    bound: float = CHSH_BOUND

    @property
    def violated(self) -> bool:
        return self.statistic > self.bound

    @property
    def margin_sigma(self) -> float:
        return (self.statistic - self.bound) / self.stderr if self.stderr > 0 else math.copysign(math.inf, self.statistic - self.bound)

    def to_dict(self) -> dict:
        a, ap, b, bp = self.settings
        return {
            "settings": {"a": a, "a_prime": ap, "b": b, "b_prime": bp},
            "statistic": self.statistic,
            "stderr": self.stderr,
            "bound": self.bound,
            "violated": self.violated,
            "margin_sigma": self.margin_sigma,
        }


@dataclass(frozen=True)
class Bell1964Result:
    a: float
    b: float
    c: float
    e_ab: float
    e_ac: float
    e_bc: float
    slack: float
    stderr: float

    @property
    def violated(self) -> bool:
        return self.slack < 0

    @property
    def margin_sigma(self) -> float:
        """How many combined standard errors the slack lies below zero."""
        return -self.slack / self.stderr if self.stderr > 0 else math.copysign(math.inf, -self.slack)

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "e_ab": self.e_ab,
            "e_ac": self.e_ac,
            "e_bc": self.e_bc,
            "slack": self.slack,
            "stderr": self.stderr,
            "violated": self.violated,
            "margin_sigma": self.margin_sigma,
        }


# -- estimation --------------------------------------------------------------


def _mask(r: RecordSet, selection: Selection) -> np.ndarray:
    if selection is None:
        return np.ones(len(r), dtype=bool)
    if callable(selection):
        m = np.asarray(selection(r.trial), dtype=bool)
    else:
        m = np.asarray(selection, dtype=bool)
    if m.shape != r.trial.shape:
        raise ValueError("selection mask does not match record count")
    return m


def _paired(r1: RecordSet, r2: RecordSet, selection: Selection) -> tuple[np.ndarray, np.ndarray]:
    m1, m2 = _mask(r1, selection), _mask(r2, selection)
    t1, t2 = r1.trial[m1], r2.trial[m2]
    if not np.array_equal(t1, t2):
        raise PairingError("station records do not share the same trial indices")
    if t1.size == 0:
        raise InsufficientDataError("selection contains no trials")
    return m1, m2


def _mean_stderr(terms: np.ndarray) -> tuple[float, float]:
    n = terms.size
    mean = float(np.mean(terms))
    if n == 1:
        return mean, TERM_BOUND
    return mean, float(np.std(terms, ddof=1)) / math.sqrt(n)


def estimate_correlation(
    r1: RecordSet, r2: RecordSet, selection: Selection = None, estimator: str = PLAIN, min_count: int = 1
) -> CorrelationEstimate:
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    m1, m2 = _paired(r1, r2, selection)
    x1, x2 = r1.setting[m1], r2.setting[m2]
    if np.any(x1 != x1[0]) or np.any(x2 != x2[0]):
        raise GroupingError("selection mixes several settings for one station")
    signs = r1.sign[m1].astype(np.float64) * r2.sign[m2]
    w = r1.weight[m1] * r2.weight[m2]
    n = signs.size
    if estimator == PLAIN:
        est, se = _mean_stderr(signs * w)
    else:
        wsum = float(np.sum(w))
        if wsum <= 0:
            raise InsufficientDataError("selected weights sum to zero")
        est = float(np.dot(signs, w)) / wsum
        # delta method for a ratio estimator
        se = math.sqrt(float(np.sum((w * (signs - est)) ** 2))) / wsum if n > 1 else 1.0
    return CorrelationEstimate(float(x1[0]), float(x2[0]), est, se, n, estimator, n < min_count)


def estimate_marginal(r1: RecordSet, r2: RecordSet, station: int, selection: Selection = None) -> MeanEstimate:
    """Weighted mean of one station's signs; vanishes when settings do not signal."""
    m1, m2 = _paired(r1, r2, selection)
    if station == 1:
        s = r1.sign[m1]
    elif station == 2:
        s = r2.sign[m2]
    else:
        raise ValueError(f"station must be 1 or 2, got {station!r}")
    est, se = _mean_stderr(s * r1.weight[m1] * r2.weight[m2])
    return MeanEstimate(est, se, int(s.size))


def mean_weight_product(r1: RecordSet, r2: RecordSet, selection: Selection = None) -> MeanEstimate:
    m1, m2 = _paired(r1, r2, selection)
    w = r1.weight[m1] * r2.weight[m2]
    est, se = _mean_stderr(w)
    return MeanEstimate(est, se, int(w.size))


def ekert_group_correlations(
    r1: RecordSet, r2: RecordSet, min_count: int = DEFAULT_MIN_COUNT, estimator: str = PLAIN
) -> list[CorrelationEstimate]:
    """One estimate per observed setting pair, sorted by (a, b)."""
    _paired(r1, r2, None)
    pairs = np.stack([r1.setting, r2.setting], axis=1)
    uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    return [
        estimate_correlation(r1, r2, inverse == g, estimator, min_count=min_count)
        for g in range(len(uniq))
    ]


# -- inequalities ------------------------------------------------------------


def chsh_statistic(e_ab: float, e_ab_prime: float, e_a_prime_b: float, e_a_prime_b_prime: float) -> float:
    """``|E(a,b) - E(a,b')| + |E(a',b) + E(a',b')|``; local ±1 statistics keep this <= 2."""
    vals = (e_ab, e_ab_prime, e_a_prime_b, e_a_prime_b_prime)
    limit = TERM_BOUND * 1.01
    for v in vals:
        if not math.isfinite(v):
            raise ArgumentError(f"non-finite correlation {v!r}")
        if abs(v) > limit:
            raise ArgumentError(f"correlation {v!r} outside [-{limit:.6g}, {limit:.6g}]")
    return abs(e_ab - e_ab_prime) + abs(e_a_prime_b + e_a_prime_b_prime)


def evaluate_chsh(
    e_ab: CorrelationEstimate, e_ab_prime: CorrelationEstimate, e_a_prime_b: CorrelationEstimate, e_a_prime_b_prime: CorrelationEstimate
) -> ChshResult:
    ests = (e_ab, e_ab_prime, e_a_prime_b, e_a_prime_b_prime)
    stat = chsh_statistic(*(e.estimate for e in ests))
    se = math.sqrt(sum(e.stderr**2 for e in ests))
    return ChshResult((e_ab.a, e_a_prime_b.a, e_ab.b, e_ab_prime.b), ests, stat, se)


def bell1964_check(e_ab: float, e_ac: float, e_bc: float) -> tuple[float, bool]:
    """Slack of ``|E(a,b) - E(a,c)| <= 1 + E(b,c)``; negative slack is a violation."""
    slack = 1.0 + e_bc - abs(e_ab - e_ac)
    return slack, slack < 0


def evaluate_bell1964(e_ab: CorrelationEstimate, e_ac: CorrelationEstimate, e_bc: CorrelationEstimate) -> Bell1964Result:
    slack, _ = bell1964_check(e_ab.estimate, e_ac.estimate, e_bc.estimate)
    se = math.sqrt(e_ab.stderr**2 + e_ac.stderr**2 + e_bc.stderr**2)
    return Bell1964Result(e_ab.a, e_ab.b, e_ac.b, e_ab.estimate, e_ac.estimate, e_bc.estimate, slack, se)


def bell1964_triples(estimates: Sequence[CorrelationEstimate]) -> list[Bell1964Result]:
    """Bell-1964 checks for every ordered triple of distinct angles whose three pairs were measured."""
    by_pair = {(e.a, e.b): e for e in estimates}
    angles = sorted({e.a for e in estimates} | {e.b for e in estimates})
    out = []
    for a, b, c in itertools.permutations(angles, 3):
        if (a, b) in by_pair and (a, c) in by_pair and (b, c) in by_pair:
            out.append(evaluate_bell1964(by_pair[(a, b)], by_pair[(a, c)], by_pair[(b, c)]))
    return out


# -- reports -----------------------------------------------------------------


def wrap_delta(a: float, b: float) -> float:
    """``b - a`` reduced to (-pi, pi]."""
    d = (b - a) % (2 * math.pi)
    return d - 2 * math.pi if d > math.pi else d


@dataclass
class Report:
    run_id: str
    mode: str
    n: int
    correlations: list[CorrelationEstimate]
    diagnostics: list[CorrelationEstimate] = field(default_factory=list)
    chsh: ChshResult | None = None
    bell1964: list[Bell1964Result] = field(default_factory=list)
    marginals: dict[str, MeanEstimate] = field(default_factory=dict)
    reference_points: int = 73

    def plot_series(self) -> tuple[list[list[float]], list[list[float]]]:
        est = sorted([wrap_delta(c.a, c.b), c.estimate] for c in self.correlations)
        grid = np.linspace(-math.pi, math.pi, self.reference_points)
        ref = [[float(d), float(-math.cos(d))] for d in grid]
        return est, ref

    def to_dict(self) -> dict:
        est, ref = self.plot_series()
        return {
            "run_id": self.run_id,
            "mode": self.mode,
            "n": self.n,
            "correlations": [c.to_dict() for c in self.correlations],
            "diagnostics": [c.to_dict() for c in self.diagnostics],
            "chsh": self.chsh.to_dict() if self.chsh else None,
            "bell1964": [b.to_dict() for b in self.bell1964],
            "marginals": {k: v.to_dict() for k, v in self.marginals.items()},
            "plot": {"estimate": est, "reference": ref},
        }


CSV_COLUMNS = ("kind", "label", "a", "a_prime", "b", "b_prime", "c", "delta", "value", "stderr", "count", "margin_sigma", "flag")


def _flags(c: CorrelationEstimate) -> str:
    return ";".join(f for f, on in (("low_count", c.low_count), ("exceeds_unit", c.exceeds_unit)) if on)


def report_rows(report: Report) -> list[dict]:
    rows = []
    for kind, items in (("correlation", report.correlations), ("diagnostic", report.diagnostics)):
        for c in items:
            rows.append({"kind": kind, "label": c.estimator, "a": c.a, "b": c.b, "value": c.estimate,
                         "stderr": c.stderr, "count": c.count, "flag": _flags(c)})
    if report.chsh is not None:
        a, ap, b, bp = report.chsh.settings
        rows.append({"kind": "chsh", "a": a, "a_prime": ap, "b": b, "b_prime": bp, "value": report.chsh.statistic,
                     "stderr": report.chsh.stderr, "margin_sigma": report.chsh.margin_sigma,
                     "flag": "violated" if report.chsh.violated else ""})
    for r in report.bell1964:
        rows.append({"kind": "bell1964", "a": r.a, "b": r.b, "c": r.c, "value": r.slack, "stderr": r.stderr,
                     "margin_sigma": r.margin_sigma, "flag": "violated" if r.violated else ""})
    for name, m in report.marginals.items():
        rows.append({"kind": "marginal", "label": name, "value": m.estimate, "stderr": m.stderr, "count": m.count})
    est, ref = report.plot_series()
    rows.extend({"kind": "plot_estimate", "delta": d, "value": v} for d, v in est)
    rows.extend({"kind": "plot_reference", "delta": d, "value": v} for d, v in ref)
    return rows


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_report(report: Report, format: str = "json") -> str:
    if format == "json":
        return json.dumps(report.to_dict(), indent=2) + "\n"
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in report_rows(report):
            w.writerow([_csv_cell(row.get(col)) for col in CSV_COLUMNS])
        return buf.getvalue()
    raise ValueError(f"unknown report format {format!r}")


def _write_text(text: str, destination) -> None:
    if isinstance(destination, (str, os.PathLike)):
        path = Path(destination)
        try:
            path.write_text(text, encoding="utf-8", newline="\n")
        except OSError as exc:
            raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}", str(path)) from exc
    else:
        destination.write(text)


def emit_report(report: Report, format: str, destination) -> None:
    _write_text(format_report(report, format), destination)


def format_plot_data(report: Report) -> str:
    est, ref = report.plot_series()
    lines = ["delta,estimate"]
    lines += [f"{d!r},{v!r}" for d, v in est]
    lines.append("delta,-cos(delta)")
    lines += [f"{d!r},{v!r}" for d, v in ref]
    return "\n".join(lines) + "\n"


def write_plot_data(report: Report, destination) -> None:
    _write_text(format_plot_data(report), destination)


def build_report(cfg, r1: RecordSet, r2: RecordSet, min_count: int = DEFAULT_MIN_COUNT) -> Report:
    """Analyze one run according to its configured mode."""
    from .protocol import ChshMode, EkertMode, chsh_boundaries

    mode = cfg.mode
    chsh = None
    bell: list[Bell1964Result] = []
    if isinstance(mode, ChshMode):
        ranges = chsh_boundaries(cfg.n, mode.boundaries)
        masks = [(r1.trial >= s) & (r1.trial < e) for s, e in ranges]
        corr = [estimate_correlation(r1, r2, m, PLAIN, min_count) for m in masks]
        diag = [estimate_correlation(r1, r2, m, SELF_NORMALIZED, min_count) for m in masks]
        chsh = evaluate_chsh(*corr)
    elif isinstance(mode, EkertMode):
        corr = ekert_group_correlations(r1, r2, min_count, PLAIN)
        diag = ekert_group_correlations(r1, r2, min_count, SELF_NORMALIZED)
        bell = bell1964_triples(corr)
    else:
        corr = [estimate_correlation(r1, r2, None, PLAIN, min_count)]
        diag = [estimate_correlation(r1, r2, None, SELF_NORMALIZED, min_count)]
    marginals = {
        "station1": estimate_marginal(r1, r2, 1),
        "station2": estimate_marginal(r1, r2, 2),
        "weight_product": mean_weight_product(r1, r2),
    }
    return Report(cfg.run_id, mode.kind, cfg.n, corr, diag, chsh, bell, marginals)
