"""Robustness measures and rank-correlation statistics.

Error rate is the flip fraction among attacked (originally correct) images;
average confidence and average epsilon are taken over successful flips only.
Correlations use Spearman rho (Pearson on average ranks) and Kendall tau-b,
with Cohen's thresholds labeling the association strength and Tukey fences
flagging outlier runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

COHEN_THRESHOLDS = ((0.10, "negligible"), (0.30, "weak"), (0.50, "moderate"))


class DegenerateDataError(ValueError):
    """Correlation undefined: a variable has zero rank variance."""


class MeasureError(ValueError):
    """Measure precondition violated."""


@dataclass
class RobustnessRecord:
    model_id: str
    init_method: str
    attack: str
    error_rate: float
    avg_confidence: float | None
    avg_epsilon: float | None
    n_attacked: int
    n_successful: int
    n_censored: int

    def to_dict(self) -> dict:
        return self.__dict__.copy()

    @classmethod
    def from_dict(cls, d: dict) -> "RobustnessRecord":
        return cls(**d)


def error_rate(outcomes) -> float:
    """Fraction of attacked images whose prediction flipped.

    Callers must pass outcomes for originally-correct images only; the rate
    conditions on correct clean classification.
    """
    if not outcomes:
        raise MeasureError("error rate undefined with zero attacked samples")
    return sum(1 for o in outcomes if o.success) / len(outcomes)


def avg_confidence(outcomes) -> float | None:
    """Mean predicted-class probability over successful flips; None if none."""
    conf = [o.confidence for o in outcomes if o.success]
    if not conf:
        return None
    return float(np.mean(conf))


def avg_epsilon(outcomes) -> float | None:
    """Mean epsilon over successful epsilon-search records; censored records
    (no flip within the cap) are excluded. None if no successes."""
    eps = [o.epsilon_used for o in outcomes if o.success and o.epsilon_used is not None]
    if not eps:
        return None
    return float(np.mean(eps))


def robustness_record(model_id: str, init_method: str, attack: str, outcomes) -> RobustnessRecord:
    """Assemble the three measures plus counts from per-image outcomes."""
    return RobustnessRecord(
        model_id=model_id,
        init_method=init_method,
        attack=attack,
        error_rate=error_rate(outcomes),
        avg_confidence=avg_confidence(outcomes),
        avg_epsilon=avg_epsilon(outcomes) if attack == "fgsm_search" else None,
        n_attacked=len(outcomes),
        n_successful=sum(1 for o in outcomes if o.success),
        n_censored=(sum(1 for o in outcomes if not o.success)
                    if attack == "fgsm_search" else 0),
    )


def _validate_pair(xs, ys, minimum: int = 3) -> tuple[np.ndarray, np.ndarray]:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise MeasureError("inputs must be 1-D arrays of equal length")
    if xs.size < minimum:
        raise MeasureError(f"need at least {minimum} pairs, got {xs.size}")
    return xs, ys


def spearman(xs, ys) -> float:
    """Spearman rho: Pearson correlation of average ranks."""
    xs, ys = _validate_pair(xs, ys)
    rx = stats.rankdata(xs, method="average")
    ry = stats.rankdata(ys, method="average")
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        raise DegenerateDataError("zero rank variance")
    return float(np.corrcoef(rx, ry)[0, 1])


def kendall(xs, ys) -> float:
    """Kendall tau-b (tie corrected)."""
    xs, ys = _validate_pair(xs, ys)
    if np.ptp(xs) == 0 or np.ptp(ys) == 0:
        raise DegenerateDataError("all-tied input")
    tau = stats.kendalltau(xs, ys, variant="b").statistic
    if not math.isfinite(tau):
        raise DegenerateDataError("tau undefined for this input")
    return float(tau)


def cohen_label(rho: float) -> str:
    """Cohen's standard on |rho|: negligible < .10 <= weak < .30 <= moderate
    < .50 <= large."""
    r = abs(rho)
    if r > 1.0 + 1e-12:
        raise MeasureError(f"|rho| must be <= 1, got {rho}")
    for bound, label in COHEN_THRESHOLDS:
        if r < bound:
            return label
    return "large"


def tukey_fences(values) -> tuple[float, float]:
    """Q1 - 1.5 IQR and Q3 + 1.5 IQR with linear-interpolation quartiles."""
    v = np.asarray(values, dtype=np.float64)
    q1, q3 = np.percentile(v, [25.0, 75.0])
    iqr = q3 - q1
    return float(q1 - 1.5 * iqr), float(q3 + 1.5 * iqr)


def iqr_filter(values) -> tuple[list[int], list[int]]:
    """Partition indices into (kept, outliers) by the Tukey fences."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 4:
        raise MeasureError(f"IQR filter needs at least 4 values, got {v.size}")
    lo, hi = tukey_fences(v)
    kept = [i for i, x in enumerate(v) if lo <= x <= hi]
    out = [i for i, x in enumerate(v) if not (lo <= x <= hi)]
    return kept, out


class AllRunsDiscardedError(ValueError):
    """Every run of a model was flagged as an outlier."""


def aggregate_runs(values, filter_fn=iqr_filter) -> float:
    """Mean of the runs surviving outlier filtering.

    filter_fn partitions indices into (kept, discarded); the default applies
    the Tukey fences to the given values themselves. Pass a closure over
    pooled fences to filter against a wider distribution.
    """
    values = list(values)
    if not values:
        raise AllRunsDiscardedError("no runs to aggregate")
    kept, _ = filter_fn(values)
    if not kept:
        raise AllRunsDiscardedError("all runs flagged as outliers")
    return float(np.mean([values[i] for i in kept]))


@dataclass
class CorrelationCell:
    graph_property: str
    attack: str
    measure: str
    rho: float | None
    tau: float | None
    label: str | None
    n: int
    flag: str | None = None  # reason a cell is undefined

    @property
    def defined(self) -> bool:
        return self.rho is not None

    def to_dict(self) -> dict:
        return {
            "graph_property": self.graph_property,
            "attack": self.attack,
            "measure": self.measure,
            "rho": self.rho,
            "tau": self.tau,
            "label": self.label,
            "n": self.n,
            "flag": self.flag,
        }


# (attack, measure) column order mirroring the correlation report layout
MEASURE_COLUMNS = (
    ("fgsm", "error_rate"),
    ("fgsm", "avg_confidence"),
    ("fgsm_search", "avg_epsilon"),
    ("one_pixel", "error_rate"),
    ("one_pixel", "avg_confidence"),
)


@dataclass
class CorrelationTable:
    cells: list[CorrelationCell]
    properties: list[str]

    def cell(self, graph_property: str, attack: str, measure: str) -> CorrelationCell:
        for c in self.cells:
            if (c.graph_property, c.attack, c.measure) == (graph_property, attack, measure):
                return c
        raise KeyError((graph_property, attack, measure))

    def layout_rows(self) -> list[list[str]]:
        """Rows for the wide CSV: one row per property, one cell per measure
        column, each cell 'rho=..|tau=..|label' or 'undefined:<reason>'."""
        header = ["graph_property"] + [f"{a}:{m}" for a, m in MEASURE_COLUMNS]
        rows = [header]
        for prop in self.properties:
            row = [prop]
            for attack, meas in MEASURE_COLUMNS:
                c = self.cell(prop, attack, meas)
                if c.defined:
                    row.append(f"rho={c.rho:+.4f}|tau={c.tau:+.4f}|{c.label}|n={c.n}")
                else:
                    row.append(f"undefined:{c.flag}|n={c.n}")
            rows.append(row)
        return rows

    def long_rows(self) -> list[list]:
        header = ["graph_property", "attack", "measure", "rho", "tau", "label", "n", "flag"]
        rows: list[list] = [header]
        for c in self.cells:
            rows.append([c.graph_property, c.attack, c.measure,
                         "" if c.rho is None else c.rho,
                         "" if c.tau is None else c.tau,
                         c.label or "", c.n, c.flag or ""])
        return rows

    def strongest(self, attack: str, measure: str, k: int = 2) -> list[CorrelationCell]:
        defined = [c for c in self.cells
                   if c.attack == attack and c.measure == measure and c.defined]
        return sorted(defined, key=lambda c: -abs(c.rho))[:k]


def correlation_cell(graph_property: str, attack: str, measure: str,
                     xs, ys) -> CorrelationCell:
    """Correlate one property/measure pair, flagging degenerate inputs."""
    n = len(xs)
    try:
        rho = spearman(xs, ys)
        tau = kendall(xs, ys)
    except (DegenerateDataError, MeasureError) as exc:
        return CorrelationCell(graph_property, attack, measure,
                               None, None, None, n, flag=str(exc))
    return CorrelationCell(graph_property, attack, measure,
                           rho, tau, cohen_label(rho), n)
