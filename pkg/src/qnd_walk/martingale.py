"""Exact and Monte Carlo checks of the (super/sub)martingale structure.

Exact checks enumerate the outcomes of one measurement step; they carry no
sampling noise and are held to ``EXACT_TOL``.  Monte Carlo checks compare
trajectory averages against exact recursions within ``MC_SIGMAS`` standard
errors.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .hilbert import DensityMatrix
from .povm import (
    ZERO_PROB_TOL,
    DegeneracyClass,
    DiscreteModel,
    apply_measurement,
    class_weights,
    mu_matrix,
    outcome_distribution,
)
from .trajectory import TrajectoryRecord

EXACT_TOL = 1e-12
MC_SIGMAS = 3.0
MIN_TRAJECTORIES = 100


@dataclass
class MartingaleReport:
    quantity: str
    exact_onestep_residual: float
    tolerance: float
    passed: bool
    mc_residual: float | None = None
    mc_stderr: float | None = None
    decay_fit: tuple[float, float] | None = None
    info: dict = field(default_factory=dict)


def _branches(theta: DensityMatrix, model: DiscreteModel):
    """(probability, post-state) for every outcome with non-zero probability."""
    probs = outcome_distribution(theta, model)
    for I, p in enumerate(probs):
        if p > ZERO_PROB_TOL:
            yield apply_measurement(theta, model, I)[::-1]


def exact_onestep_diag(
    theta: DensityMatrix, model: DiscreteModel, classes: Sequence[DegeneracyClass] | None = None
) -> np.ndarray:
    """``sum_I P(I) Tr(theta'_I Pi_c) - Tr(theta Pi_c)`` for every class."""
    classes = model.classes if classes is None else classes
    expect = np.zeros(len(classes))
    for p, post in _branches(theta, model):
        expect += p * class_weights(post, classes)
    return expect - class_weights(theta, classes)


@dataclass
class OffdiagFactor:
    i: int
    j: int
    measured: float
    mu: float
    kind: str
    tilde: complex


def exact_onestep_offdiag(theta: DensityMatrix, model: DiscreteModel) -> list[OffdiagFactor]:
    """One-step factor of ``A^{ij} = |theta^{ij}|`` for every pair ``i < j``.

    ``measured`` is ``sum_I P(I) A'^{ij}_I / A^{ij}`` (or ``nan`` when
    ``A^{ij} = 0``); it should equal ``mu_ij``.  The complex factor
    ``sum_I lam_I^i conj(lam_I^j)`` is attached for information only.
    """
    mu = mu_matrix(model)
    d = theta.dim
    expect = np.zeros((d, d))
    for p, post in _branches(theta, model):
        expect += p * np.abs(post.data)
    A = np.abs(theta.data)
    out = []
    for i in range(d):
        for j in range(i + 1, d):
            measured = expect[i, j] / A[i, j] if A[i, j] > 0 else float("nan")
            m_ij = float(mu.basis[i, j])
            kind = "martingale" if abs(m_ij - 1.0) <= EXACT_TOL else "supermartingale"
            out.append(OffdiagFactor(i, j, float(measured), m_ij, kind, complex(mu.tilde[i, j])))
    return out


def offdiag_residual(theta: DensityMatrix, model: DiscreteModel) -> float:
    """``max_ij |sum_I P(I) A'^{ij}_I - mu_ij A^{ij}|``."""
    mu = mu_matrix(model).basis
    expect = np.zeros((theta.dim, theta.dim))
    for p, post in _branches(theta, model):
        expect += p * np.abs(post.data)
    return float(np.max(np.abs(expect - mu * np.abs(theta.data))))


def purity_submartingale_check(theta: DensityMatrix, model: DiscreteModel, m: int = 2) -> float:
    """``sum_I P(I) Tr(theta'_I^m) - Tr(theta^m)``; non-negative up to rounding."""
    if m < 2:
        raise ValueError("m must be >= 2")

    def tr_pow(a):
        return float(np.trace(np.linalg.matrix_power(a, m)).real)

    lhs = sum(p * tr_pow(post.data) for p, post in _branches(theta, model))
    return lhs - tr_pow(theta.data)


def density_martingale_gap(theta: DensityMatrix, model: DiscreteModel) -> float:
    """``max |sum_I M_I theta M_I^dag - theta|``: the full state is not a martingale."""
    avg = np.zeros_like(theta.data)
    for lam in model.lam:
        avg += theta.data * np.outer(lam, lam.conj())
    return float(np.max(np.abs(avg - theta.data)))


def unconditional_class_expectation(
    model: DiscreteModel, theta0: DensityMatrix, n: int, limit: int = 4096
) -> np.ndarray:
    """``E[Tr(theta_n Pi_c)]`` by enumerating every outcome sequence of length ``n``.

    States are propagated step by step through the measurement map, so this
    does not reuse any closed-form expression.
    """
    K = model.n_outcomes
    if K**n > limit:
        raise ValueError(f"{K}^{n} sequences exceed the limit {limit}")
    classes = model.classes
    outer = model.lam[:, :, None] * model.lam.conj()[:, None, :]
    states = np.asarray(theta0.data)[None]
    prob = np.ones(1)
    for _ in range(n):
        # branch every state on every outcome, then renormalize each branch
        post = states[:, None] * outer[None]
        p = np.einsum("bkii->bk", post).real
        live = p > ZERO_PROB_TOL
        post = post[live] / p[live][:, None, None]
        prob = (prob[:, None] * p)[live]
        states = 0.5 * (post + post.conj().transpose(0, 2, 1))
    diag = np.einsum("bii->bi", states).real
    w = np.stack([diag[:, list(c.members)].sum(axis=1) for c in classes], axis=1)
    return prob @ w


@dataclass
class DecayCurve:
    pair: tuple[int, int]
    steps: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    predicted: np.ndarray
    mu: float
    rate: float | None
    rate_stderr: float | None
    n_trajectories: int
    warning: str | None = None

    @property
    def z_scores(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (self.mean - self.predicted) / self.stderr
        return np.where(self.stderr > 0, z, np.where(self.mean == self.predicted, 0.0, np.inf))

    def passed(self, sigmas: float = MC_SIGMAS, tol: float = 1e-12) -> bool:
        exact = np.abs(self.mean - self.predicted) <= tol
        return bool(np.all(exact | (np.abs(self.z_scores) <= sigmas)))


def decay_curve(
    records: Sequence[TrajectoryRecord], pair: tuple[int, int], model: DiscreteModel | None = None
) -> DecayCurve:
    """Sample mean of ``|theta_n^{ij}|`` across trajectories, against ``mu_ij^n A_0``.

    The prediction iterates the exact one-step relation
    ``E[A_{n+1} | past] = mu_ij A_n`` from the common initial value.
    The geometric rate is fitted by weighted least squares on ``log mean``.
    """
    if not records:
        raise ValueError("no records")
    cfg = records[0].config
    if any(r.offdiag is None for r in records):
        raise ValueError("records were run without record_offdiag")
    model = cfg.models[0] if model is None else model
    i, j = pair
    A = np.stack([r.offdiag[:, i, j] for r in records])
    N = A.shape[0]
    mean = A.mean(axis=0)
    stderr = A.std(axis=0, ddof=1) / np.sqrt(N) if N > 1 else np.full(mean.shape, np.inf)
    steps = records[0].steps
    mu = float(mu_matrix(model).basis[i, j])
    A0 = float(np.abs(cfg.initial_state.data[i, j]))
    predicted = A0 * mu ** steps.astype(float)
    rate = rate_se = None
    # points with round-off-level spread would dominate the weighted fit
    ok = (mean > 0) & (stderr > 1e-9 * mean)
    if ok.sum() >= 3:
        w = mean[ok] / stderr[ok]
        coef, cov = np.polyfit(steps[ok].astype(float), np.log(mean[ok]), 1, w=w, cov="unscaled")
        rate = float(np.exp(coef[0]))
        rate_se = float(rate * np.sqrt(cov[0, 0]))
    elif ok.sum() == 0 and np.allclose(mean, mean[0]) and mean[0] > 0:
        rate, rate_se = 1.0, 0.0
    warning = f"only {N} trajectories (< {MIN_TRAJECTORIES})" if N < MIN_TRAJECTORIES else None
    return DecayCurve((i, j), steps, mean, stderr, predicted, mu, rate, rate_se, N, warning)


@dataclass
class FixedPointReport:
    status: list[str]
    converged_class: list[int | None]
    fixed_point_residual: list[float | None]
    contradictions: list[int]
    indistinguishable_pairs: list[tuple[int, int]]
    epsilon: float

    @property
    def n_pending(self) -> int:
        return self.status.count("pending")

    @property
    def passed(self) -> bool:
        worst = max((r for r in self.fixed_point_residual if r is not None), default=0.0)
        return not self.contradictions and not self.indistinguishable_pairs and worst <= self.epsilon


def asymptotic_fixed_point_check(
    final_states: Sequence[DensityMatrix],
    model: DiscreteModel,
    classes: Sequence[DegeneracyClass] | None = None,
    epsilon: float = 1e-6,
) -> FixedPointReport:
    """Classify final states as converged, pending, or contradictory.

    A converged state has one class with weight ``>= 1 - epsilon``; it must
    then satisfy ``|lam_I^c|^2 = sum_k |lam_I^k|^2 theta^k`` for every
    outcome to within ``epsilon``.  A state with two or more classes above
    ``epsilon`` is pending, unless every one of those classes satisfies the
    fixed-point relation: that would be a stationary state spread over
    several classes, which a valid model rules out, and is reported as a
    contradiction.  Classes reached by different trajectories must have
    distinguishable outcome statistics.
    """
    classes = model.classes if classes is None else classes
    P = model.probs[:, [c.members[0] for c in classes]]
    status, conv, resid, contra = [], [], [], []
    for k, st in enumerate(final_states):
        w = class_weights(st, classes)
        mix = P @ w
        res = np.max(np.abs(P - mix[:, None]), axis=0)
        top = int(np.argmax(w))
        if w[top] >= 1.0 - epsilon:
            status.append("converged")
            conv.append(top)
            resid.append(float(res[top]))
            continue
        present = np.flatnonzero(w > epsilon)
        if present.size > 1 and np.all(res[present] <= epsilon):
            status.append("contradiction")
            contra.append(k)
        else:
            status.append("pending")
        conv.append(None)
        resid.append(None)
    reached = sorted({c for c in conv if c is not None})
    bad_pairs = []
    for a, b in itertools.combinations(reached, 2):
        if np.max(np.abs(P[:, a] - P[:, b])) <= 1e-9:
            bad_pairs.append((a, b))
    return FixedPointReport(status, conv, resid, contra, bad_pairs, epsilon)


def martingale_reports(
    theta: DensityMatrix,
    model: DiscreteModel,
    records: Sequence[TrajectoryRecord] | None = None,
    tol: float = EXACT_TOL,
) -> list[MartingaleReport]:
    """Exact one-step reports for every class weight, off-diagonal pair and purity power.

    When ``records`` carrying off-diagonal magnitudes are supplied, each pair
    report also gets the Monte Carlo decay comparison.
    """
    out = []
    for c, r in zip(model.classes, exact_onestep_diag(theta, model)):
        out.append(MartingaleReport(f"diag_class {c.label}", float(abs(r)), tol, bool(abs(r) <= tol)))
    A = np.abs(theta.data)
    for f in exact_onestep_offdiag(theta, model):
        res = 0.0 if A[f.i, f.j] == 0 else abs(f.measured - f.mu) * A[f.i, f.j]
        rep = MartingaleReport(
            f"offdiag ({f.i},{f.j})",
            float(res),
            tol,
            bool(res <= tol),
            info={"mu": f.mu, "kind": f.kind, "mu_tilde": [f.tilde.real, f.tilde.imag]},
        )
        if records and records[0].offdiag is not None:
            curve = decay_curve(records, (f.i, f.j), model)
            z = curve.z_scores
            k = int(np.argmax(np.abs(z)))
            rep.mc_residual = float(curve.mean[k] - curve.predicted[k])
            rep.mc_stderr = float(curve.stderr[k])
            if curve.rate is not None:
                rep.decay_fit = (curve.rate, f.mu)
            rep.passed = rep.passed and curve.passed()
        out.append(rep)
    for m in (2, 3):
        r = purity_submartingale_check(theta, model, m)
        out.append(MartingaleReport(f"purity_{m}", float(r), tol, bool(r >= -tol)))
    return out
