"""Continuous-outcome Gaussian QND measurement.

The pointer outcome ``p`` has measurement operator
``M_p = N sum_i exp(-(p - q_i)^2 / (2 delta^2)) |q_i><q_i|`` with
``N = (pi delta^2)^(-1/4)``.  For a state with diagonal weights ``w_i`` the
outcome density is the Gaussian mixture ``sum_i w_i Normal(q_i, delta/sqrt(2))``.

A single width ``delta`` is used throughout; the pointer-width symbol that
appears in some y_M formulas is taken to be the same quantity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .hilbert import DensityMatrix, ValidationError
from .povm import DegeneracyClass, ObservableSpec, build_degeneracy_classes


@dataclass(frozen=True, eq=False)
class GaussianModel:
    spec: ObservableSpec
    delta: float

    def __post_init__(self):
        d = float(self.delta)
        if not (np.isfinite(d) and d > 0):
            raise ValidationError(f"delta must be finite and positive, got {self.delta!r}")
        object.__setattr__(self, "delta", d)

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def norm(self) -> float:
        """N with N^2 sqrt(pi delta^2) = 1."""
        return (np.pi * self.delta**2) ** -0.25

    @property
    def outcome_std(self) -> float:
        """Standard deviation of p for a sharp eigenstate."""
        return self.delta / np.sqrt(2.0)

    @property
    def classes(self) -> list[DegeneracyClass]:
        return build_degeneracy_classes(self.spec)


def log_lambda(m: GaussianModel, p: float) -> np.ndarray:
    """``log lambda_p^i`` for every basis index."""
    q = m.spec.eigenvalues
    return np.log(m.norm) - (p - q) ** 2 / (2.0 * m.delta**2)


def lambda_continuous(m: GaussianModel, p: float, i: int) -> float:
    return float(m.norm * np.exp(-((p - m.spec.eigenvalues[i]) ** 2) / (2.0 * m.delta**2)))


def outcome_density(theta: DensityMatrix, m: GaussianModel, p) -> np.ndarray | float:
    """``P(p) = sum_i theta^{ii} (lambda_p^i)^2``; vectorized over ``p``."""
    w = theta.diagonal
    q = m.spec.eigenvalues
    p_arr = np.asarray(p, dtype=float)
    dens = m.norm**2 * np.exp(-((p_arr[..., None] - q) ** 2) / m.delta**2) @ w
    return float(dens) if dens.ndim == 0 else dens


def mu_closed_form(m: GaussianModel) -> np.ndarray:
    """``mu_ij = exp(-(q_i - q_j)^2 / (4 delta^2))``."""
    q = m.spec.eigenvalues
    return np.exp(-((q[:, None] - q[None, :]) ** 2) / (4.0 * m.delta**2))


def sample_outcome(theta: DensityMatrix, m: GaussianModel, rng: np.random.Generator) -> float:
    """Draw p exactly from the mixture: pick a basis index by weight, then a normal."""
    w = theta.diagonal
    c = np.cumsum(w)
    i = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    i = min(i, w.size - 1)
    return float(m.spec.eigenvalues[i] + m.outcome_std * rng.standard_normal())


def apply_gaussian(theta: DensityMatrix, m: GaussianModel, p: float) -> tuple[DensityMatrix, float]:
    """Update ``theta`` on outcome ``p``; returns the new state and ``P(p)``.

    Weights are evaluated relative to the largest supported ``lambda_p^i`` so
    extreme outcomes do not underflow.
    """
    w = theta.diagonal
    ll = log_lambda(m, p)
    support = w > 0
    if not support.any():
        raise ValueError("state has no diagonal weight")
    shift = ll[support].max()
    g = np.exp(ll - shift)
    rel = float((g**2) @ w)
    if not rel > 0:
        raise ValueError(f"outcome density underflows at p={p!r}")
    new = theta.data * np.outer(g, g) / rel
    new = 0.5 * (new + new.conj().T)
    new /= np.trace(new).real
    return DensityMatrix(new), float(np.exp(2.0 * shift) * rel)


@dataclass(frozen=True)
class YmComponent:
    weight: float
    center: float
    variance: float

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))


@dataclass(frozen=True)
class YmDistribution:
    kind: str
    M: int
    components: tuple[YmComponent, ...]

    def pdf(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for c in self.components:
            out = out + c.weight * np.exp(-((y - c.center) ** 2) / (2 * c.variance)) / np.sqrt(
                2 * np.pi * c.variance
            )
        return out

    @property
    def mean(self) -> float:
        return float(sum(c.weight * c.center for c in self.components))


def ym_pdf(
    kind: Literal["ensemble", "repeated"],
    M: int,
    state,
    m: GaussianModel,
    exact_variance: bool = False,
) -> YmDistribution:
    """Distribution of the average of M outcomes.

    Parameters
    ----------
    kind : {"ensemble", "repeated"}
        ``"ensemble"``: M independent copies, one Gaussian at ``<q>`` with
        variance ``delta^2 / (2M)``.  ``"repeated"``: M successive outcomes
        on one copy, a mixture over degeneracy classes with weights
        ``Tr(theta Pi_c)``, centers ``q_c`` and variance ``delta^2 / (2M)``.
    state : DensityMatrix or array_like
        The initial state, or its diagonal weights.
    exact_variance : bool
        Ensemble kind only: add the observable spread ``Var_theta(q) / M``,
        giving the exact variance of the sample mean of i.i.d. outcomes.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    w = state.diagonal if isinstance(state, DensityMatrix) else np.asarray(state, dtype=float)
    q = m.spec.eigenvalues
    var = m.delta**2 / (2.0 * M)
    if kind == "ensemble":
        mean = float(w @ q)
        if exact_variance:
            var = var + float(w @ (q - mean) ** 2) / M
        return YmDistribution("ensemble", M, (YmComponent(1.0, mean, var),))
    if kind == "repeated":
        comps = []
        for c in m.classes:
            wc = float(w[list(c.members)].sum())
            comps.append(YmComponent(wc, c.eigenvalue, var))
        return YmDistribution("repeated", M, tuple(comps))
    raise ValueError(f"unknown kind {kind!r}")
