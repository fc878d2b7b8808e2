"""Reference models, states and canned experiments.

The experiments here are what ``qnd-walk demo`` runs and what the
acceptance tests check.  Each returns a plain result object with the
measured numbers and a ``passed`` flag; none of them write files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gaussian import GaussianModel, ym_pdf
from .hilbert import DensityMatrix, density_from_pure, trace_distance
from .martingale import EXACT_TOL, DecayCurve, decay_curve
from .povm import DiscreteModel, ObservableSpec
from .stats import (
    BornTestReport,
    LudersReport,
    YmCompareReport,
    born_rule_test,
    count_modes,
    ensemble_mode_sampler,
    luders_batch_check,
    ym_compare,
    ym_from_records,
)
from .trajectory import FreeEvolution, TrajectoryConfig, TrajectoryRecord, run_ensemble

SEED = 20240611


def qubit_model() -> DiscreteModel:
    """q = (1, -1); outcome A has probabilities (0.8, 0.2), outcome B (0.2, 0.8)."""
    lam = np.sqrt([[0.8, 0.2], [0.2, 0.8]])
    return DiscreteModel(ObservableSpec([1.0, -1.0]), lam, outcomes=("A", "B"), outcome_values=[1.0, -1.0])


def qubit_state() -> DensityMatrix:
    """Pure state with populations (0.3, 0.7) and coherence sqrt(0.21)."""
    return density_from_pure(np.sqrt([0.3, 0.7]))


def plus_state() -> DensityMatrix:
    return density_from_pure(np.array([1.0, 1.0]) / np.sqrt(2.0))


def degenerate_model() -> DiscreteModel:
    """q = (1, 1, -1) with lambda constant on the degenerate pair."""
    lam = np.sqrt([[0.8, 0.8, 0.2], [0.2, 0.2, 0.8]])
    return DiscreteModel(ObservableSpec([1.0, 1.0, -1.0]), lam, outcomes=("A", "B"), outcome_values=[1.0, -1.0])


def degenerate_state() -> DensityMatrix:
    return DensityMatrix(np.eye(3, dtype=complex) / 3.0)


def gaussian_qubit(delta: float) -> GaussianModel:
    return GaussianModel(ObservableSpec([1.0, -1.0]), delta)


def mixed_qubit_state() -> DensityMatrix:
    return DensityMatrix(np.diag([0.3, 0.7]).astype(complex))


@dataclass
class CollapseResult:
    records: list[TrajectoryRecord]
    converged_fraction: float
    max_projector_distance: float
    born: BornTestReport
    seconds: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def collapse_passed(self) -> bool:
        return self.converged_fraction >= 0.99 and self.max_projector_distance <= 1e-5

    @property
    def born_passed(self) -> bool:
        frac0 = self.born.fractions[0]
        return abs(frac0 - 0.30) <= 0.02 and self.born.p_value > 0.01

    def summary(self) -> dict:
        return {
            "converged_fraction": self.converged_fraction,
            "max_projector_distance": self.max_projector_distance,
            "class0_fraction": float(self.born.fractions[0]),
            "born": self.born.to_dict(),
            "seconds": self.seconds,
            "collapse_pass": self.collapse_passed,
            "born_pass": self.born_passed,
        }


def collapse_experiment(
    N: int = 5000,
    n: int = 300,
    seed: int = SEED,
    free_evolution: FreeEvolution | None = None,
    workers: int | None = None,
) -> CollapseResult:
    """Qubit collapse and Born frequencies for the reference model."""
    import time

    t0 = time.perf_counter()
    model = qubit_model()
    theta0 = qubit_state()
    cfg = TrajectoryConfig(model, theta0, n, seed, free_evolution=free_evolution)
    recs = run_ensemble(cfg, N, workers)
    elapsed = time.perf_counter() - t0
    projectors = [DensityMatrix(c.projector.data.astype(complex)) for c in model.classes]
    conv = [r for r in recs if r.converged_class is not None]
    dist = max((trace_distance(r.final_state, projectors[r.converged_class]) for r in conv), default=np.inf)
    born = born_rule_test(recs, theta0)
    return CollapseResult(recs, len(conv) / N, float(dist), born, elapsed)


@dataclass
class DecayResult:
    curve: DecayCurve
    lo: int
    hi: int

    @property
    def window(self) -> np.ndarray:
        s = self.curve.steps
        return (s >= self.lo) & (s <= self.hi)

    @property
    def max_abs_z(self) -> float:
        """Largest |z| over the window, ignoring points exact to round-off."""
        c = self.curve
        w = self.window & (np.abs(c.mean - c.predicted) > EXACT_TOL)
        return float(np.max(np.abs(c.z_scores[w]))) if w.any() else 0.0

    @property
    def passed(self) -> bool:
        return self.max_abs_z <= 3.0

    def summary(self) -> dict:
        w = self.window
        return {
            "steps": self.curve.steps[w].tolist(),
            "mean": self.curve.mean[w].tolist(),
            "predicted": self.curve.predicted[w].tolist(),
            "stderr": self.curve.stderr[w].tolist(),
            "max_abs_z": self.max_abs_z,
            "fitted_rate": self.curve.rate,
            "mu": self.curve.mu,
            "pass": self.passed,
        }


def decay_experiment(N: int = 10_000, n: int = 30, seed: int = SEED, workers: int | None = None) -> DecayResult:
    """Mean off-diagonal magnitude from |+>, against ``0.5 * mu^n``."""
    cfg = TrajectoryConfig(qubit_model(), plus_state(), n, seed, record_offdiag=True)
    recs = run_ensemble(cfg, N, workers)
    return DecayResult(decay_curve(recs, (0, 1)), 1, n)


@dataclass
class DegenerateResult:
    born: BornTestReport
    luders: LudersReport
    max_block_drift: float
    n_unconverged: int
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        z_ok = bool(np.all(np.abs(self.born.z_scores) <= 3.0))
        return z_ok and self.luders.passed and self.max_block_drift <= 1e-10

    def summary(self) -> dict:
        return {
            "fractions": self.born.fractions.tolist(),
            "z_scores": self.born.z_scores.tolist(),
            "luders": self.luders.to_dict(),
            "max_block_drift": self.max_block_drift,
            "n_unconverged": self.n_unconverged,
            "seconds": self.seconds,
            "pass": self.passed,
        }


def degenerate_experiment(N: int = 3000, n: int = 400, seed: int = SEED, workers: int | None = None) -> DegenerateResult:
    """Three-level observable with a degenerate pair, started maximally mixed."""
    import time

    t0 = time.perf_counter()
    theta0 = degenerate_state()
    cfg = TrajectoryConfig(degenerate_model(), theta0, n, seed, track_blocks=True)
    recs = run_ensemble(cfg, N, workers)
    elapsed = time.perf_counter() - t0
    born = born_rule_test(recs, theta0)
    lud = luders_batch_check(recs, theta0)
    drift = max(r.block_drift for r in recs)
    return DegenerateResult(born, lud, float(drift), born.n_unconverged, elapsed)


@dataclass
class GaussianResult:
    delta: float
    M: int
    repeated: YmCompareReport
    repeated_modes: int
    ensemble: YmCompareReport
    ensemble_nominal: YmCompareReport
    ensemble_modes: int
    ensemble_mean: float
    repeated_values: np.ndarray
    ensemble_values: np.ndarray
    seconds: float = 0.0

    @property
    def center_gate(self) -> float:
        """``3 (delta / sqrt(2M)) / sqrt(N)``: nominal gate for the ensemble center."""
        return float(3.0 * self.delta / np.sqrt(2.0 * self.M) / np.sqrt(self.ensemble_values.size))

    @property
    def ensemble_center_ok(self) -> bool:
        return abs(self.ensemble_mean - self.ensemble.components[0].center) <= self.center_gate

    @property
    def passed(self) -> bool:
        return (
            self.repeated.passed
            and self.repeated_modes == 2
            and self.ensemble.passed
            and self.ensemble_center_ok
            and self.ensemble_modes == 1
        )

    def summary(self) -> dict:
        return {
            "delta": self.delta,
            "M": self.M,
            "repeated": self.repeated.to_dict(),
            "repeated_modes": self.repeated_modes,
            "ensemble": self.ensemble.to_dict(),
            "ensemble_nominal_variance": self.ensemble_nominal.to_dict(),
            "ensemble_modes": self.ensemble_modes,
            "ensemble_mean": self.ensemble_mean,
            "ensemble_center_gate": self.center_gate,
            "ensemble_center_pass": self.ensemble_center_ok,
            "seconds": self.seconds,
            "pass": self.passed,
        }


def gaussian_experiment(
    delta: float, M: int = 500, N: int = 2000, seed: int = SEED, workers: int | None = None
) -> GaussianResult:
    """``y_M`` for repeated measurement on one copy versus M fresh copies.

    The repeated-mode prediction is the exact class mixture.  The ensemble
    control is gated with the exact variance of an i.i.d. mean,
    ``(delta^2/2 + Var(q)) / M``; the nominal-variance comparison is kept
    in the result for reference.
    """
    import time

    t0 = time.perf_counter()
    model = gaussian_qubit(delta)
    theta0 = mixed_qubit_state()
    cfg = TrajectoryConfig(model, theta0, M, seed, record_stride=M)
    recs = run_ensemble(cfg, N, workers)
    rep = ym_from_records(recs, M)
    ens = ensemble_mode_sampler(theta0, model, M, N, seed + 1)
    elapsed = time.perf_counter() - t0
    return GaussianResult(
        delta=delta,
        M=M,
        repeated=ym_compare(rep, ym_pdf("repeated", M, theta0, model)),
        repeated_modes=count_modes(rep.values),
        ensemble=ym_compare(ens, ym_pdf("ensemble", M, theta0, model, exact_variance=True)),
        ensemble_nominal=ym_compare(ens, ym_pdf("ensemble", M, theta0, model)),
        ensemble_modes=count_modes(ens.values),
        ensemble_mean=float(ens.values.mean()),
        repeated_values=rep.values,
        ensemble_values=ens.values,
        seconds=elapsed,
    )
