"""Single-copy repeated measurement trajectories.

Trajectories are simulated in blocks: all trajectories of a block advance in
lock-step through vectorized array operations.  Every reduction is written as
an explicit accumulation over the small Hilbert-space axis, so a trajectory's
floating-point history does not depend on which block it was simulated in.
Randomness comes from a counter-based Philox stream keyed by
``(seed, trajectory_index)``; serial and parallel runs therefore agree
bitwise.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .gaussian import GaussianModel
from .hilbert import DensityMatrix, ValidationError
from .povm import DegeneracyClass, DiscreteModel, class_weights, validate_model

Model = Union[DiscreteModel, GaussianModel]

BLOCK_SIZE = 512
BLOCK_FLOOR = 1e-250


class NumericalAbort(RuntimeError):
    """A trajectory state drifted out of the density-matrix set."""

    def __init__(self, message: str, indices: Sequence[int] = (), step: int | None = None):
        super().__init__(message)
        self.indices = tuple(int(i) for i in indices)
        self.step = step


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Philox stream for one trajectory, keyed by a hash of ``(seed, index)``."""
    ss = np.random.SeedSequence([int(seed) % 2**64, int(index) % 2**64])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class FreeEvolution:
    """System Hamiltonian diagonal in the observable eigenbasis.

    ``hs_phases[i]`` is the energy ``h_i`` of ``|q_i>``; ``tau`` is either a
    constant interval or one interval per measurement step.  Evolution by
    ``exp(i H_S tau_n)`` is applied after measurement ``n``.
    """

    hs_phases: np.ndarray
    tau: float | np.ndarray = 1.0

    def __post_init__(self):
        h = np.asarray(self.hs_phases, dtype=float).ravel()
        if not np.all(np.isfinite(h)):
            raise ValidationError("hs_phases must be finite")
        object.__setattr__(self, "hs_phases", h)
        tau = np.asarray(self.tau, dtype=float)
        if tau.ndim == 0:
            object.__setattr__(self, "tau", float(tau))
        else:
            object.__setattr__(self, "tau", tau.ravel())

    def tau_at(self, step: int) -> float:
        if isinstance(self.tau, float):
            return self.tau
        return float(self.tau[step - 1])

    def total_tau(self, n: int) -> float:
        if isinstance(self.tau, float):
            return self.tau * n
        return float(np.sum(self.tau[:n]))

    def phase_matrix(self, tau: float) -> np.ndarray:
        h = self.hs_phases
        return np.exp(1j * (h[:, None] - h[None, :]) * tau)


@dataclass(frozen=True, eq=False)
class TrajectoryConfig:
    """Everything that determines a trajectory (or a family of them).

    ``model`` may be a single model or a sequence used as a per-step schedule
    (step ``n`` uses ``models[(n - 1) % len(models)]``).
    """

    model: Model | Sequence[Model]
    initial_state: DensityMatrix
    n_steps: int
    seed: int
    trajectory_index: int = 0
    record_stride: int = 1
    convergence_epsilon: float = 1e-6
    luders_delta: float = 1e-5
    free_evolution: FreeEvolution | None = None
    record_offdiag: bool = False
    track_blocks: bool = False
    psd_abort: float = 1e-8

    def __post_init__(self):
        models = tuple(self.model) if isinstance(self.model, (list, tuple)) else (self.model,)
        if not models:
            raise ValidationError("model schedule is empty")
        kinds = {type(m) for m in models}
        if len(kinds) != 1 or not kinds <= {DiscreteModel, GaussianModel}:
            raise ValidationError("model schedule must be all discrete or all Gaussian models")
        q0 = models[0].spec.eigenvalues
        for m in models:
            if m.spec.dim != q0.size or not np.array_equal(m.spec.eigenvalues, q0):
                raise ValidationError("all scheduled models must measure the same observable")
            if isinstance(m, DiscreteModel):
                tol = 1e-9 if m.edges is not None else 1e-12
                rep = validate_model(m, completeness_tol=tol)
                if not rep.ok:
                    raise ValidationError("invalid model: " + "; ".join(str(f) for f in rep.failures))
        object.__setattr__(self, "model", models if len(models) > 1 else models[0])
        if not isinstance(self.initial_state, DensityMatrix):
            object.__setattr__(self, "initial_state", DensityMatrix(self.initial_state))
        if self.initial_state.dim != q0.size:
            raise ValidationError(
                f"initial state dimension {self.initial_state.dim} does not match observable dimension {q0.size}"
            )
        if int(self.n_steps) < 1:
            raise ValidationError("n_steps must be >= 1")
        if int(self.record_stride) < 1:
            raise ValidationError("record_stride must be >= 1")
        if not self.convergence_epsilon > 0:
            raise ValidationError("convergence_epsilon must be > 0")
        fe = self.free_evolution
        if fe is not None:
            if fe.hs_phases.size != q0.size:
                raise ValidationError("hs_phases length does not match the dimension")
            if not isinstance(fe.tau, float) and fe.tau.size < self.n_steps:
                raise ValidationError("tau schedule shorter than n_steps")

    @property
    def models(self) -> tuple[Model, ...]:
        return self.model if isinstance(self.model, tuple) else (self.model,)

    @property
    def is_gaussian(self) -> bool:
        return isinstance(self.models[0], GaussianModel)

    @property
    def spec(self):
        return self.models[0].spec

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def classes(self) -> list[DegeneracyClass]:
        return self.models[0].classes

    def with_index(self, index: int) -> "TrajectoryConfig":
        from dataclasses import replace

        return replace(self, trajectory_index=int(index))


@dataclass(frozen=True)
class StepRecord:
    step: int
    outcome: object
    log_conditional_probability: float | None
    class_weights: np.ndarray
    offdiag_magnitudes: np.ndarray | None
    purity: float


@dataclass(eq=False)
class TrajectoryRecord:
    """Recorded history of one trajectory.

    Per-step arrays cover all ``n_steps`` measurements; state diagnostics are
    kept at the recorded steps ``steps`` (always including 0 and the last).
    For discrete models ``outcomes`` holds outcome indices, for the Gaussian
    model the real pointer values; ``log_conditional`` is then a log density.
    """

    config: TrajectoryConfig
    trajectory_index: int
    steps: np.ndarray
    outcomes: np.ndarray
    log_conditional: np.ndarray
    class_weights: np.ndarray
    purity: np.ndarray
    offdiag: np.ndarray | None
    final_state: DensityMatrix
    log_joint_probability: float
    converged_class: int | None = None
    converged_at: int | None = None
    block_drift: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return int(self.outcomes.size)

    def step(self, k: int) -> StepRecord:
        """Diagnostics at the ``k``-th recorded step."""
        n = int(self.steps[k])
        if n == 0:
            outcome, logp = None, None
        else:
            o = self.outcomes[n - 1]
            outcome = int(o) if self.outcomes.dtype.kind == "i" else float(o)
            logp = float(self.log_conditional[n - 1])
        return StepRecord(
            step=n,
            outcome=outcome,
            log_conditional_probability=logp,
            class_weights=self.class_weights[k],
            offdiag_magnitudes=None if self.offdiag is None else self.offdiag[k],
            purity=float(self.purity[k]),
        )

    def records(self) -> list[StepRecord]:
        return [self.step(k) for k in range(self.steps.size)]


def record_steps(n_steps: int, stride: int) -> np.ndarray:
    s = np.arange(0, n_steps + 1, stride)
    if s[-1] != n_steps:
        s = np.append(s, n_steps)
    return s


def _rowsum(x: np.ndarray) -> np.ndarray:
    """Sum over the last axis in a fixed left-to-right order."""
    s = x[..., 0].copy()
    for k in range(1, x.shape[-1]):
        s += x[..., k]
    return s


def _simulate_block(cfg: TrajectoryConfig, indices: Sequence[int]) -> list[TrajectoryRecord]:
    indices = [int(i) for i in indices]
    B, n, d = len(indices), int(cfg.n_steps), cfg.dim
    models = cfg.models
    gauss = cfg.is_gaussian
    classes = cfg.classes
    C = len(classes)
    q = cfg.spec.eigenvalues
    rows = np.arange(B)

    rngs = [trajectory_rng(cfg.seed, k) for k in indices]
    u = np.stack([r.random(n) for r in rngs])
    z = np.stack([r.standard_normal(n) for r in rngs]) if gauss else None

    if not gauss:
        tables = [(m.probs, np.einsum("ki,kj->kij", m.lam, m.lam.conj())) for m in models]
    fe = cfg.free_evolution
    const_phase = fe.phase_matrix(fe.tau) if fe is not None and isinstance(fe.tau, float) else None

    th = np.broadcast_to(cfg.initial_state.data, (B, d, d)).copy()
    steps = record_steps(n, int(cfg.record_stride))
    R = steps.size
    cw = np.empty((B, R, C))
    pur = np.empty((B, R))
    off = np.empty((B, R, d, d)) if cfg.record_offdiag else None
    outcomes = np.empty((B, n), dtype=np.float64 if gauss else np.int64)
    logc = np.empty((B, n))

    blocks = []
    if cfg.track_blocks:
        th0 = cfg.initial_state.data
        for c in classes:
            if c.dim < 2:
                continue
            idx = np.array(c.members)
            w0 = th0.diagonal().real[idx].sum()
            if w0 > BLOCK_FLOOR:
                blocks.append((idx, th0[np.ix_(idx, idx)] / w0))
    drift = np.zeros(B)

    def record(r: int, step: int):
        diag = th.diagonal(axis1=1, axis2=2).real
        for c in classes:
            cw[:, r, c.label] = _rowsum(diag[:, list(c.members)])
        pur[:, r] = _rowsum((th.real**2 + th.imag**2).reshape(B, d * d))
        if off is not None:
            off[:, r] = np.abs(th)
        low = np.linalg.eigvalsh(th)[:, 0]
        bad = np.flatnonzero(low < -cfg.psd_abort)
        if bad.size:
            raise NumericalAbort(
                f"state left the PSD cone at step {step} (min eigenvalue {low[bad].min():.3g}) "
                f"for trajectories {[indices[b] for b in bad]}",
                [indices[b] for b in bad],
                step,
            )

    record(0, 0)
    r = 1
    for step in range(1, n + 1):
        diag = np.ascontiguousarray(th.diagonal(axis1=1, axis2=2).real)
        x = u[:, step - 1]
        if not gauss:
            probs_tab, outer = tables[(step - 1) % len(models)]
            K = probs_tab.shape[0]
            probs = diag[:, 0, None] * probs_tab[None, :, 0]
            for i in range(1, d):
                probs += diag[:, i, None] * probs_tab[None, :, i]
            cum = np.cumsum(probs, axis=1)
            total = cum[:, -1]
            pick = np.minimum((cum <= (x * total)[:, None]).sum(axis=1), K - 1)
            p_pick = probs[rows, pick]
            th *= outer[pick]
            th /= p_pick[:, None, None]
            logc[:, step - 1] = np.log(p_pick) - np.log(total)
            outcomes[:, step - 1] = pick
        else:
            m = models[(step - 1) % len(models)]
            cum = np.cumsum(diag, axis=1)
            total = cum[:, -1]
            which = np.minimum((cum <= (x * total)[:, None]).sum(axis=1), d - 1)
            p = q[which] + m.outcome_std * z[:, step - 1]
            ll = -((p[:, None] - q[None, :]) ** 2) / (2.0 * m.delta**2)
            shift = np.where(diag > 0, ll, -np.inf).max(axis=1)
            g = np.exp(ll - shift[:, None])
            rel = _rowsum(g * g * diag)
            th *= g[:, :, None] * g[:, None, :]
            th /= rel[:, None, None]
            logc[:, step - 1] = 2.0 * shift + 2.0 * np.log(m.norm) + np.log(rel) - np.log(total)
            outcomes[:, step - 1] = p
        if fe is not None:
            th *= const_phase if const_phase is not None else fe.phase_matrix(fe.tau_at(step))
        th = 0.5 * (th + th.conj().swapaxes(1, 2))
        th /= _rowsum(th.diagonal(axis1=1, axis2=2).real)[:, None, None]
        for idx, ref in blocks:
            blk = th[:, idx[:, None], idx[None, :]]
            w = _rowsum(blk.diagonal(axis1=1, axis2=2).real)
            live = w > BLOCK_FLOOR
            if live.any():
                dev = np.abs(blk[live] / w[live, None, None] - ref).reshape(-1, idx.size**2).max(axis=1)
                drift[live] = np.maximum(drift[live], dev)
        if r < R and steps[r] == step:
            record(r, step)
            r += 1

    out = []
    for b, k in enumerate(indices):
        rec = TrajectoryRecord(
            config=cfg,
            trajectory_index=k,
            steps=steps,
            outcomes=outcomes[b],
            log_conditional=logc[b],
            class_weights=cw[b],
            purity=pur[b],
            offdiag=None if off is None else off[b],
            final_state=DensityMatrix(th[b]),
            log_joint_probability=float(np.sum(logc[b])),
            block_drift=float(drift[b]) if cfg.track_blocks else None,
        )
        hit = detect_convergence(rec, cfg.convergence_epsilon)
        if hit is not None:
            rec.converged_class, rec.converged_at = hit
        out.append(rec)
    return out


def run_trajectory(cfg: TrajectoryConfig) -> TrajectoryRecord:
    """Simulate the single trajectory ``cfg.trajectory_index``."""
    return _simulate_block(cfg, [cfg.trajectory_index])[0]


def default_workers() -> int:
    env = os.environ.get("QND_WALK_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"QND_WALK_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def run_ensemble(base: TrajectoryConfig, N: int, workers: int | None = None) -> list[TrajectoryRecord]:
    """Simulate trajectories ``base.trajectory_index + k`` for ``k < N``.

    Work is split into fixed blocks of trajectory indices; with ``workers > 1``
    blocks run in separate processes.  The returned list is ordered by index
    and is identical for any worker count.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    start = int(base.trajectory_index)
    chunks = [list(range(a, min(a + BLOCK_SIZE, start + N))) for a in range(start, start + N, BLOCK_SIZE)]
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(chunks) == 1:
        parts = [_simulate_block(base, ch) for ch in chunks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(chunks))) as pool:
            parts = list(pool.map(_simulate_block, [base] * len(chunks), chunks))
    return [rec for part in parts for rec in part]


def apply_free_evolution(theta: DensityMatrix, hs_phases, tau: float) -> DensityMatrix:
    """``theta^{ij} -> exp(i (h_i - h_j) tau) theta^{ij}``."""
    h = np.asarray(hs_phases, dtype=float).ravel()
    if h.size != theta.dim:
        raise ValueError("hs_phases length does not match the dimension")
    new = theta.data * np.exp(1j * (h[:, None] - h[None, :]) * tau)
    return DensityMatrix(new)


def detect_convergence(record: TrajectoryRecord, eps: float) -> tuple[int, int] | None:
    """Earliest recorded step from which one class keeps weight >= 1 - eps."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    cw = record.class_weights
    top = cw.argmax(axis=1)
    ok = cw[np.arange(top.size), top] >= 1.0 - eps
    if not ok[-1]:
        return None
    bad = np.flatnonzero(~ok | (top != top[-1]))
    k0 = bad[-1] + 1 if bad.size else 0
    return int(top[-1]), int(record.steps[k0])


def _log_products(record: TrajectoryRecord) -> tuple[np.ndarray, np.ndarray]:
    """Per basis index: sum of log|lambda| and of arg(lambda) along the record."""
    cfg = record.config
    models = cfg.models
    n = record.n_steps
    d = cfg.dim
    loga = np.zeros(d)
    phase = np.zeros(d)
    if cfg.is_gaussian:
        q = cfg.spec.eigenvalues
        for j in range(n):
            m = models[j % len(models)]
            loga += np.log(m.norm) - (record.outcomes[j] - q) ** 2 / (2.0 * m.delta**2)
        return loga, phase
    with np.errstate(divide="ignore"):
        for j in range(n):
            lam = models[j % len(models)].lam[int(record.outcomes[j])]
            loga += np.log(np.abs(lam))
            phase += np.angle(lam)
    return loga, phase


def product_form_state(record: TrajectoryRecord, theta0: DensityMatrix | None = None) -> DensityMatrix:
    """Closed-form state after the recorded outcomes.

    Accumulates the per-class products of lambda over the whole outcome
    sequence and applies them to ``theta0`` in one shot,
    ``sum_{a,b} L_a conj(L_b) Pi_a theta0 Pi_b / J``, then applies the total
    free-evolution phase (which commutes with every measurement).
    """
    cfg = record.config
    theta0 = cfg.initial_state if theta0 is None else theta0
    classes = cfg.classes
    loga, phase = _log_products(record)
    reps = [c.members[0] for c in classes]
    cw = class_weights(theta0, classes)
    a = loga[reps]
    live = (cw > 0) & np.isfinite(a)
    if not live.any():
        raise ValueError("recorded sequence has zero probability under theta0")
    shift = a[live].max()
    with np.errstate(under="ignore"):
        amp = np.exp(a - shift) * np.exp(1j * phase[reps])
    t0 = theta0.data
    num = np.zeros_like(t0)
    for ca, La in zip(classes, amp):
        Pa = ca.projector.data
        for cb, Lb in zip(classes, amp):
            num += La * np.conj(Lb) * (Pa @ t0 @ cb.projector.data)
    J = float(np.sum(np.abs(amp) ** 2 * cw))
    theta = num / J
    fe = cfg.free_evolution
    if fe is not None:
        U = np.diag(np.exp(1j * fe.hs_phases * fe.total_tau(record.n_steps)))
        theta = U @ theta @ U.conj().T
    theta = 0.5 * (theta + theta.conj().T)
    return DensityMatrix(theta / np.trace(theta).real)


def product_form_log_joint(record: TrajectoryRecord, theta0: DensityMatrix | None = None) -> float:
    """``log J`` of the recorded sequence from the closed-form class sum."""
    cfg = record.config
    theta0 = cfg.initial_state if theta0 is None else theta0
    loga, _ = _log_products(record)
    reps = [c.members[0] for c in cfg.classes]
    cw = class_weights(theta0, cfg.classes)
    terms = 2.0 * loga[reps] + np.log(np.where(cw > 0, cw, 1.0))
    terms = np.where(cw > 0, terms, -np.inf)
    top = terms.max()
    return float(top + np.log(np.sum(np.exp(terms - top))))


def joint_probability_exact(
    model: DiscreteModel, theta0: DensityMatrix, n: int, limit: int = 10**6
) -> np.ndarray:
    """Probability of every length-``n`` outcome sequence.

    Returns an array of shape ``(K,) * n``; entry ``[I_1, ..., I_n]`` is
    ``sum_c Tr(theta0 Pi_c) prod_j |lam_{I_j}^c|^2``.
    """
    K = model.n_outcomes
    if n < 1:
        raise ValueError("n must be >= 1")
    if K**n > limit:
        raise ValueError(f"enumeration of {K}^{n} sequences exceeds the limit {limit}")
    classes = model.classes
    cw = class_weights(theta0, classes)
    P = model.probs[:, [c.members[0] for c in classes]]
    J = np.zeros((K,) * n)
    for c in range(len(classes)):
        term = P[:, c]
        for _ in range(n - 1):
            term = np.multiply.outer(term, P[:, c])
        J += cw[c] * term
    return J
