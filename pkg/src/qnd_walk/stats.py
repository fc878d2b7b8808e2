"""Batch statistics over trajectory families.

Born-rule frequencies, Lüders final-state checks, and the distribution of
outcome averages ``y_M`` in single-copy (trajectory) versus ensemble mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .gaussian import GaussianModel, YmDistribution
from .hilbert import DensityMatrix, project_block, purity, trace_distance
from .povm import DegeneracyClass, DiscreteModel, class_weights
from .trajectory import TrajectoryRecord, trajectory_rng

ZERO_WEIGHT = 1e-300


@dataclass
class BornTestReport:
    expected: np.ndarray
    counts: np.ndarray
    n_converged: int
    n_unconverged: int
    chi_square: float
    dof: int
    p_value: float
    z_scores: np.ndarray
    z_threshold: float
    zero_weight_violations: list[int]
    alpha: float
    unconverged_cap: float
    notes: list[str] = field(default_factory=list)

    @property
    def fractions(self) -> np.ndarray:
        return self.counts / max(self.n_converged, 1)

    @property
    def unconverged_fraction(self) -> float:
        total = self.n_converged + self.n_unconverged
        return self.n_unconverged / total if total else 0.0

    @property
    def passed(self) -> bool:
        return (
            not self.notes
            and not self.zero_weight_violations
            and self.p_value > self.alpha
            and bool(np.all(np.abs(self.z_scores) <= self.z_threshold))
            and self.unconverged_fraction <= self.unconverged_cap
        )

    def to_dict(self) -> dict:
        return {
            "expected": self.expected.tolist(),
            "counts": self.counts.tolist(),
            "fractions": self.fractions.tolist(),
            "n_converged": self.n_converged,
            "n_unconverged": self.n_unconverged,
            "chi_square": self.chi_square,
            "dof": self.dof,
            "p_value": self.p_value,
            "z_scores": self.z_scores.tolist(),
            "z_threshold": self.z_threshold,
            "zero_weight_violations": self.zero_weight_violations,
            "alpha": self.alpha,
            "unconverged_cap": self.unconverged_cap,
            "notes": self.notes,
            "pass": self.passed,
        }


def born_rule_test(
    records: Sequence[TrajectoryRecord],
    theta0: DensityMatrix,
    classes: Sequence[DegeneracyClass] | None = None,
    alpha: float = 0.01,
    unconverged_cap: float = 0.01,
    min_converged: int = 100,
) -> BornTestReport:
    """Pearson chi-square of converged-class counts against ``Tr(theta0 Pi_c)``.

    Classes with zero Born weight must receive no trajectories at all.
    Per-class binomial z-scores are gated at the Bonferroni-corrected
    two-sided level ``alpha / n_classes``.
    """
    classes = records[0].config.classes if classes is None else classes
    expected = class_weights(theta0, classes)
    C = len(classes)
    counts = np.zeros(C, dtype=np.int64)
    unconverged = 0
    for r in records:
        if r.converged_class is None:
            unconverged += 1
        else:
            counts[r.converged_class] += 1
    n = int(counts.sum())
    notes = []
    if n < min_converged:
        notes.append(f"only {n} converged trajectories (< {min_converged})")
    zero = [int(c) for c in np.flatnonzero((expected <= ZERO_WEIGHT) & (counts > 0))]
    live = expected > ZERO_WEIGHT
    k = int(live.sum())
    if k > 1 and n > 0:
        f_exp = expected[live] / expected[live].sum() * n
        chi2, p = sps.chisquare(counts[live], f_exp)
        chi2, p = float(chi2), float(p)
    else:
        chi2, p = 0.0, 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        sd = np.sqrt(expected * (1 - expected) / max(n, 1))
        z = np.where(sd > 0, (counts / max(n, 1) - expected) / sd, 0.0)
    z_thr = float(sps.norm.isf(alpha / (2 * max(k, 1))))
    return BornTestReport(
        expected=expected,
        counts=counts,
        n_converged=n,
        n_unconverged=unconverged,
        chi_square=chi2,
        dof=max(k - 1, 0),
        p_value=p,
        z_scores=z,
        z_threshold=z_thr,
        zero_weight_violations=zero,
        alpha=alpha,
        unconverged_cap=unconverged_cap,
        notes=notes,
    )


@dataclass
class LudersReport:
    max_distance: dict[int, float]
    counts: dict[int, int]
    target_purity: dict[int, float]
    delta: float

    @property
    def passed(self) -> bool:
        return all(v <= self.delta for v in self.max_distance.values())

    def to_dict(self) -> dict:
        return {
            "max_trace_distance": {str(k): v for k, v in self.max_distance.items()},
            "counts": {str(k): v for k, v in self.counts.items()},
            "target_purity": {str(k): v for k, v in self.target_purity.items()},
            "delta": self.delta,
            "pass": self.passed,
        }


def luders_targets(theta0: DensityMatrix, classes: Sequence[DegeneracyClass]) -> dict[int, DensityMatrix]:
    """``Pi_c theta0 Pi_c / Tr(Pi_c theta0)`` for every class with weight."""
    out = {}
    for c in classes:
        if class_weights(theta0, [c])[0] > ZERO_WEIGHT:
            out[c.label] = project_block(theta0, c.projector)[0]
    return out


def luders_batch_check(
    records: Sequence[TrajectoryRecord],
    theta0: DensityMatrix,
    classes: Sequence[DegeneracyClass] | None = None,
    delta: float = 1e-5,
) -> LudersReport:
    """Largest trace distance of each converged final state to its Lüders target."""
    classes = records[0].config.classes if classes is None else classes
    targets = luders_targets(theta0, classes)
    dist: dict[int, float] = {}
    counts: dict[int, int] = {}
    for r in records:
        c = r.converged_class
        if c is None:
            continue
        if c not in targets:
            dist[c] = float("inf")
            counts[c] = counts.get(c, 0) + 1
            continue
        dd = trace_distance(r.final_state, targets[c])
        dist[c] = max(dist.get(c, 0.0), dd)
        counts[c] = counts.get(c, 0) + 1
    return LudersReport(dist, counts, {k: purity(v) for k, v in targets.items()}, delta)


@dataclass
class YmSample:
    M: int
    values: np.ndarray
    mode: str = "repeated"


def _outcome_values(record: TrajectoryRecord) -> np.ndarray:
    if record.config.is_gaussian:
        return record.outcomes
    m = record.config.models[0]
    if m.outcome_values is None:
        raise ValueError("discrete model has no numeric outcome_values")
    return m.outcome_values[record.outcomes]


def ym_from_records(records: Sequence[TrajectoryRecord], M: int) -> YmSample:
    """``y_M`` = mean of the first ``M`` outcomes of each trajectory."""
    if any(r.n_steps < M for r in records):
        raise ValueError(f"trajectories shorter than M={M}")
    vals = np.array([_outcome_values(r)[:M].mean() for r in records])
    return YmSample(M, vals, "repeated")


def ensemble_mode_sampler(
    theta0: DensityMatrix,
    model: GaussianModel | DiscreteModel,
    M: int,
    N: int,
    seed: int,
    start_index: int = 0,
) -> YmSample:
    """``y_M`` with every outcome drawn from the fixed ``theta0`` distribution.

    Models M measurements on M fresh copies: outcomes are i.i.d. and the
    state is never updated.  Sample ``k`` uses the stream
    ``(seed, start_index + k)``.
    """
    if M < 1 or N < 1:
        raise ValueError("M and N must be >= 1")
    w = theta0.diagonal
    vals = np.empty(N)
    if isinstance(model, GaussianModel):
        cum = np.cumsum(w)
        q = model.spec.eigenvalues
        for k in range(N):
            rng = trajectory_rng(seed, start_index + k)
            u = rng.random(M)
            z = rng.standard_normal(M)
            i = np.minimum(np.searchsorted(cum, u * cum[-1], side="right"), w.size - 1)
            vals[k] = np.mean(q[i] + model.outcome_std * z)
    else:
        if model.outcome_values is None:
            raise ValueError("discrete model has no numeric outcome_values")
        probs = model.probs @ w
        cum = np.cumsum(probs)
        for k in range(N):
            u = trajectory_rng(seed, start_index + k).random(M)
            I = np.minimum(np.searchsorted(cum, u * cum[-1], side="right"), probs.size - 1)
            vals[k] = np.mean(model.outcome_values[I])
    return YmSample(M, vals, "ensemble")


@dataclass
class ComponentCheck:
    center: float
    weight: float
    std: float
    count: int
    observed_weight: float
    weight_z: float
    mean: float | None
    mean_gate: float | None
    variance: float | None
    variance_gate: float | None
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class YmCompareReport:
    M: int
    n: int
    components: list[ComponentCheck]
    overlapping: bool
    sigmas: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.components)

    @property
    def n_modes(self) -> int:
        """Number of predicted components that attracted samples."""
        return sum(1 for c in self.components if c.count > 0)

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "n": self.n,
            "overlapping": self.overlapping,
            "sigmas": self.sigmas,
            "components": [c.to_dict() for c in self.components],
            "pass": self.passed,
        }


def ym_compare(sample: YmSample, predicted: YmDistribution, sigmas: float = 3.0) -> YmCompareReport:
    """Compare a ``y_M`` sample with a predicted Gaussian mixture.

    Each value is assigned to the nearest predicted center.  Per component:
    the observed fraction must lie within ``sigmas`` binomial standard
    deviations of the predicted weight; the cluster mean within
    ``sigmas * std / sqrt(N w)`` of the center; the cluster variance within
    ``sigmas`` standard errors of the predicted variance.  When centers are
    closer than 6 component standard deviations, assignment is unreliable
    and only the weight gate is applied (the report is flagged).
    """
    y = np.asarray(sample.values, dtype=float)
    N = y.size
    comps = sorted(predicted.components, key=lambda c: c.center)
    centers = np.array([c.center for c in comps])
    stds = np.array([c.std for c in comps])
    gaps = np.diff(centers)
    overlapping = bool(gaps.size and np.any(gaps < 6 * stds.max()))
    assign = np.argmin(np.abs(y[:, None] - centers[None, :]), axis=1)
    checks = []
    for k, c in enumerate(comps):
        sel = y[assign == k]
        cnt = sel.size
        frac = cnt / N
        sd_w = np.sqrt(c.weight * (1 - c.weight) / N)
        if sd_w > 0:
            wz = (frac - c.weight) / sd_w
            ok = abs(wz) <= sigmas
        else:
            wz = 0.0 if frac == c.weight else float("inf")
            ok = frac == c.weight
        mean = mgate = var = vgate = None
        if not overlapping and c.weight > 0 and cnt > 1:
            mean = float(sel.mean())
            mgate = float(sigmas * c.std / np.sqrt(N * c.weight))
            var = float(sel.var(ddof=1))
            vgate = float(sigmas * c.variance * np.sqrt(2.0 / (cnt - 1)))
            ok = ok and abs(mean - c.center) <= mgate and abs(var - c.variance) <= vgate
        checks.append(
            ComponentCheck(
                center=c.center,
                weight=c.weight,
                std=c.std,
                count=int(cnt),
                observed_weight=float(frac),
                weight_z=float(wz),
                mean=mean,
                mean_gate=mgate,
                variance=var,
                variance_gate=vgate,
                passed=bool(ok),
            )
        )
    return YmCompareReport(sample.M, N, checks, overlapping, sigmas)


def histogram(values, bins: int = 50, range: tuple[float, float] | None = None) -> list[tuple[float, float, int]]:
    """Rows ``(bin_left, bin_right, count)``."""
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins, range=range)
    return [(float(edges[k]), float(edges[k + 1]), int(counts[k])) for k in np.arange(counts.size)]


def count_modes(values, grid: int = 512, prominence: float = 0.05) -> int:
    """Number of local maxima of a Gaussian KDE of ``values``.

    Maxima lower than ``prominence`` times the global maximum are ignored.
    """
    y = np.asarray(values, dtype=float)
    if y.size < 2 or np.ptp(y) == 0:
        return 1
    kde = sps.gaussian_kde(y)
    xs = np.linspace(y.min(), y.max(), grid)
    f = kde(xs)
    inner = (f[1:-1] > f[:-2]) & (f[1:-1] >= f[2:])
    peaks = np.flatnonzero(inner) + 1
    ends = [k for k in (0, grid - 1) if (k == 0 and f[0] > f[1]) or (k == grid - 1 and f[-1] > f[-2])]
    peaks = np.concatenate([peaks, np.array(ends, dtype=int)])
    return int(np.sum(f[peaks] >= prominence * f.max()))
