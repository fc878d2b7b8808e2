"""Observables, degeneracy classes and diagonal (QND) measurement models.

A discrete model is stored only through its lambda-table ``lam[I, i]``: the
eigenvalue of measurement operator ``M_I`` on basis vector ``|q_i>``.  Every
operator is diagonal in the observable eigenbasis, so commutation with the
observable and with every class projector holds by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .hilbert import DensityMatrix, Projector, ValidationError

DEGENERACY_TOL = 1e-9
COMPLETENESS_TOL = 1e-12
CONSTANCY_TOL = 1e-12
DISTINGUISH_TOL = 1e-9
ZERO_PROB_TOL = 1e-300


class AmbiguousDegeneracyError(ValidationError):
    """Eigenvalues form a near-degenerate chain wider than the tolerance."""


class ZeroProbabilityError(ValueError):
    """The requested outcome has (numerically) zero probability."""


class InvalidModelError(ValidationError):
    """The model fails completeness and cannot be applied."""


@dataclass(frozen=True, eq=False)
class ObservableSpec:
    eigenvalues: np.ndarray
    degeneracy_tolerance: float = DEGENERACY_TOL

    def __post_init__(self):
        q = np.asarray(self.eigenvalues, dtype=float).ravel()
        if q.size == 0:
            raise ValidationError("observable needs at least one eigenvalue")
        if not np.all(np.isfinite(q)):
            raise ValidationError("observable eigenvalues must be finite")
        if not self.degeneracy_tolerance >= 0:
            raise ValidationError("degeneracy_tolerance must be non-negative")
        q = q.copy()
        q.flags.writeable = False
        object.__setattr__(self, "eigenvalues", q)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size


@dataclass(frozen=True, eq=False)
class DegeneracyClass:
    label: int
    members: tuple[int, ...]
    eigenvalue: float
    projector: Projector

    @property
    def dim(self) -> int:
        return len(self.members)


def build_degeneracy_classes(spec: ObservableSpec) -> list[DegeneracyClass]:
    """Group eigenbasis indices into degeneracy classes.

    Consecutive sorted eigenvalues closer than the tolerance are grouped; a
    group whose total spread exceeds the tolerance is a non-transitive chain
    and raises :class:`AmbiguousDegeneracyError`.  Class labels follow the
    basis order: class 0 contains basis index 0, and so on.
    """
    q = spec.eigenvalues
    tol = spec.degeneracy_tolerance
    order = np.argsort(q, kind="stable")
    groups: list[list[int]] = [[int(order[0])]]
    for a, b in zip(order[:-1], order[1:]):
        if q[b] - q[a] <= tol:
            groups[-1].append(int(b))
        else:
            groups.append([int(b)])
    groups.sort(key=min)
    classes = []
    for label, g in enumerate(groups):
        vals = q[g]
        if vals.max() - vals.min() > tol:
            raise AmbiguousDegeneracyError(
                f"eigenvalues {sorted(vals.tolist())} chain within tolerance {tol:g} "
                "but their spread exceeds it; degeneracy classes are ambiguous"
            )
        members = tuple(sorted(g))
        classes.append(
            DegeneracyClass(
                label=label,
                members=members,
                eigenvalue=float(vals.mean()),
                projector=Projector.from_indices(spec.dim, members),
            )
        )
    return classes


def class_index_map(classes: Sequence[DegeneracyClass], dim: int) -> np.ndarray:
    """Array mapping each basis index to its class label."""
    out = np.empty(dim, dtype=np.int64)
    for c in classes:
        out[list(c.members)] = c.label
    return out


def class_weights(theta, classes: Sequence[DegeneracyClass]) -> np.ndarray:
    """Tr(theta Pi_c) for every class."""
    diag = np.asarray(theta.data if isinstance(theta, DensityMatrix) else theta).diagonal().real
    return np.array([diag[list(c.members)].sum() for c in classes])


@dataclass(frozen=True, eq=False)
class DiscreteModel:
    """Finite-outcome QND model given by its lambda-table.

    Parameters
    ----------
    spec : ObservableSpec
        The measured observable; fixes the basis order.
    lam : array_like, shape (n_outcomes, dim)
        ``lam[I, i]`` is the eigenvalue of ``M_I`` on ``|q_i>``.
    outcomes : sequence, optional
        Outcome labels; defaults to ``"0" .. "K-1"``.
    outcome_values : array_like, optional
        Numeric value attached to each outcome (used for outcome averages).
    edges : array_like, optional
        Bin edges when the model discretizes a continuous pointer.
    """

    spec: ObservableSpec
    lam: np.ndarray
    outcomes: tuple = ()
    outcome_values: np.ndarray | None = None
    edges: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        lam = np.array(self.lam, dtype=np.complex128, copy=True)
        if lam.ndim != 2 or lam.shape[1] != self.spec.dim or lam.shape[0] == 0:
            raise ValidationError(
                f"lambda table must have shape (n_outcomes, {self.spec.dim}), got {lam.shape}"
            )
        if not np.all(np.isfinite(lam)):
            raise ValidationError("lambda table has non-finite entries")
        lam.flags.writeable = False
        object.__setattr__(self, "lam", lam)
        outcomes = tuple(self.outcomes) or tuple(str(k) for k in range(lam.shape[0]))
        if len(outcomes) != lam.shape[0]:
            raise ValidationError(f"{len(outcomes)} outcome labels for {lam.shape[0]} outcomes")
        object.__setattr__(self, "outcomes", outcomes)
        if self.outcome_values is not None:
            v = np.asarray(self.outcome_values, dtype=float).ravel()
            if v.size != lam.shape[0]:
                raise ValidationError("outcome_values length does not match outcomes")
            object.__setattr__(self, "outcome_values", v)
        if self.edges is not None:
            object.__setattr__(self, "edges", np.asarray(self.edges, dtype=float).ravel())

    @property
    def dim(self) -> int:
        return self.lam.shape[1]

    @property
    def n_outcomes(self) -> int:
        return self.lam.shape[0]

    @property
    def probs(self) -> np.ndarray:
        """``|lam|^2``, shape (n_outcomes, dim)."""
        if "probs" not in self._cache:
            p = np.abs(self.lam) ** 2
            p.flags.writeable = False
            self._cache["probs"] = p
        return self._cache["probs"]

    @property
    def classes(self) -> list[DegeneracyClass]:
        if "classes" not in self._cache:
            self._cache["classes"] = build_degeneracy_classes(self.spec)
        return self._cache["classes"]

    def completeness_residual(self) -> float:
        return float(np.max(np.abs(self.probs.sum(axis=0) - 1.0)))

    def class_lambda(self, classes: Sequence[DegeneracyClass] | None = None) -> np.ndarray:
        """Lambda-table restricted to one representative per class, shape (K, n_classes)."""
        classes = self.classes if classes is None else classes
        return self.lam[:, [c.members[0] for c in classes]]

    def bin_index(self, p: float) -> int:
        """Index of the bin containing ``p`` (binned models only)."""
        if self.edges is None:
            raise ValueError("model has no bin edges")
        k = int(np.searchsorted(self.edges, p, side="right")) - 1
        return min(max(k, 0), self.n_outcomes - 1)


@dataclass
class ConstraintFailure:
    constraint: str
    indices: tuple
    value: float

    def __str__(self):
        return f"{self.constraint} at {self.indices}: {self.value:.3g}"


@dataclass
class ValidationReport:
    failures: list[ConstraintFailure] = field(default_factory=list)
    completeness_residual: float = 0.0
    constancy_residual: float = 0.0
    min_distinguishability: float = float("inf")

    @property
    def ok(self) -> bool:
        return not self.failures

    def failed(self, constraint: str) -> list[ConstraintFailure]:
        return [f for f in self.failures if f.constraint == constraint]


def validate_model(
    m: DiscreteModel,
    classes: Sequence[DegeneracyClass] | None = None,
    completeness_tol: float = COMPLETENESS_TOL,
) -> ValidationReport:
    """Check completeness, class constancy and class distinguishability.

    Never raises on a bad model; every violated constraint is listed in the
    report with the offending indices.
    """
    classes = m.classes if classes is None else classes
    rep = ValidationReport()
    cols = m.probs.sum(axis=0)
    rep.completeness_residual = float(np.max(np.abs(cols - 1.0)))
    for i, s in enumerate(cols):
        if abs(s - 1.0) > completeness_tol:
            rep.failures.append(ConstraintFailure("completeness", (i,), float(s)))

    worst = 0.0
    for c in classes:
        ref = c.members[0]
        for j in c.members[1:]:
            diff = np.abs(m.lam[:, j] - m.lam[:, ref])
            worst = max(worst, float(diff.max()))
            for I in np.flatnonzero(diff > CONSTANCY_TOL):
                rep.failures.append(ConstraintFailure("class_constancy", (int(I), ref, j), float(diff[I])))
    rep.constancy_residual = worst

    for a in range(len(classes)):
        for b in range(a + 1, len(classes)):
            pa = m.probs[:, classes[a].members[0]]
            pb = m.probs[:, classes[b].members[0]]
            gap = float(np.max(np.abs(pa - pb)))
            rep.min_distinguishability = min(rep.min_distinguishability, gap)
            if gap <= DISTINGUISH_TOL:
                rep.failures.append(
                    ConstraintFailure("distinguishability", (classes[a].label, classes[b].label), gap)
                )
    return rep


@dataclass(frozen=True, eq=False)
class MuMatrix:
    """Overlap factors ``mu_ij = sum_I |lam_I^i| |lam_I^j|``.

    ``basis`` is indexed by eigenbasis index, ``classes`` by class label.
    ``tilde`` keeps the complex factor ``sum_I lam_I^i conj(lam_I^j)``.
    """

    basis: np.ndarray
    classes: np.ndarray
    tilde: np.ndarray


def mu_matrix(m: DiscreteModel, classes: Sequence[DegeneracyClass] | None = None) -> MuMatrix:
    classes = m.classes if classes is None else classes
    a = np.abs(m.lam)
    mu = a.T @ a
    reps = [c.members[0] for c in classes]
    return MuMatrix(basis=mu, classes=mu[np.ix_(reps, reps)], tilde=m.lam.T @ m.lam.conj())


def outcome_distribution(theta: DensityMatrix, m: DiscreteModel) -> np.ndarray:
    """``P(I) = Tr M_I theta M_I^dag = sum_i |lam_I^i|^2 theta^{ii}``."""
    return m.probs @ theta.diagonal


def apply_measurement(theta: DensityMatrix, m: DiscreteModel, outcome: int) -> tuple[DensityMatrix, float]:
    """Post-measurement state for outcome index ``outcome`` and its probability."""
    if m.completeness_residual() > COMPLETENESS_TOL:
        raise InvalidModelError(
            f"model is not complete (residual {m.completeness_residual():.3g})"
        )
    if theta.dim != m.dim:
        raise ValueError(f"state dimension {theta.dim} does not match model dimension {m.dim}")
    lam = m.lam[outcome]
    p = float(m.probs[outcome] @ theta.diagonal)
    if p <= ZERO_PROB_TOL:
        raise ZeroProbabilityError(f"outcome {m.outcomes[outcome]!r} has probability {p:.3g}")
    new = theta.data * np.outer(lam, lam.conj()) / p
    new = 0.5 * (new + new.conj().T)
    new /= np.trace(new).real
    return DensityMatrix(new), p


def binned_gaussian_model(
    delta: float,
    spec: ObservableSpec,
    n_bins: int,
    range: tuple[float, float],
    coverage: float = 5.0,
) -> DiscreteModel:
    """Discretize the Gaussian pointer into ``n_bins`` equal bins.

    ``lam[I, i]`` is the square root of the Gaussian outcome mass of bin I
    for eigenvalue ``q_i`` (a normal law with std ``delta / sqrt(2)``), with
    each column renormalized to unit total mass.  The range must cover
    every ``q_i +- coverage * delta``; otherwise the captured mass is too
    low and a ``ValueError`` reports the completeness failure.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    if not delta > 0:
        raise ValueError("delta must be positive")
    lo, hi = float(range[0]), float(range[1])
    q = spec.eigenvalues
    edges = np.linspace(lo, hi, n_bins + 1)
    sd = delta / np.sqrt(2.0)
    cdf = ndtr((edges[:, None] - q[None, :]) / sd)
    mass = np.diff(cdf, axis=0)
    captured = mass.sum(axis=0)
    if lo > q.min() - coverage * delta or hi < q.max() + coverage * delta:
        raise ValueError(
            f"range [{lo:g}, {hi:g}] does not cover q_i +- {coverage:g}*delta; "
            f"completeness failure: captured column mass {captured.min():.12g}"
        )
    lam = np.sqrt(mass / captured)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return DiscreteModel(
        spec=spec,
        lam=lam,
        outcomes=tuple(f"{c:.17g}" for c in centers),
        outcome_values=centers,
        edges=edges,
    )


# -- JSON interchange ------------------------------------------------------


def _complex_to_json(z: complex) -> dict:
    return {"re": float(z.real), "im": float(z.imag)}


def _complex_from_json(v) -> complex:
    if isinstance(v, dict):
        return complex(float(v.get("re", 0.0)), float(v.get("im", 0.0)))
    if isinstance(v, (list, tuple)):
        return complex(float(v[0]), float(v[1]))
    return complex(float(v))


def model_to_dict(m: DiscreteModel) -> dict:
    d = {
        "type": "discrete",
        "dim": m.dim,
        "eigenvalues": [float(x) for x in m.spec.eigenvalues],
        "degeneracy_tolerance": m.spec.degeneracy_tolerance,
        "outcomes": list(m.outcomes),
        "lambda": [[_complex_to_json(z) for z in row] for row in m.lam],
    }
    if m.outcome_values is not None:
        d["outcome_values"] = [float(x) for x in m.outcome_values]
    return d


def model_from_dict(d: dict) -> DiscreteModel:
    try:
        spec = ObservableSpec(d["eigenvalues"], float(d.get("degeneracy_tolerance", DEGENERACY_TOL)))
        lam = np.array([[_complex_from_json(v) for v in row] for row in d["lambda"]], dtype=np.complex128)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed discrete model block: {exc}") from exc
    if "dim" in d and int(d["dim"]) != spec.dim:
        raise ValidationError(f"dim {d['dim']} does not match {spec.dim} eigenvalues")
    return DiscreteModel(
        spec=spec,
        lam=lam,
        outcomes=tuple(d.get("outcomes", ())),
        outcome_values=d.get("outcome_values"),
    )


def load_model_json(text: str) -> DiscreteModel:
    return model_from_dict(json.loads(text))


def dump_model_json(m: DiscreteModel) -> str:
    return json.dumps(model_to_dict(m), indent=2)
