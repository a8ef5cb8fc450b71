"""Standard-normal special functions and the discrete truncated-Gaussian cost.

An uncertain cost with mean ``c_mu`` and standard deviation ``c_sigma``
is modeled as a Gaussian truncated to [c_mu - 3*c_sigma, c_mu + 3*c_sigma]
and approximated by an M-outcome lottery. The truncation range is split
into M equal-width bins; the ascending outcome grid

    c_j = c_mu + c_sigma * (-3 + 6*(j-1)/M),   j = 1..M

places each outcome at the lower edge of its bin, and bin masses are
Gaussian CDF differences re-normalized by Z = cdf(3) - cdf(-3). The top
bin closes at the upper truncation bound so the masses sum to one
exactly; for a symmetric grid the mass vector is symmetric about c_mu.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

_PROB_SUM_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteCost:
    """An M-outcome cost lottery: sorted nonnegative outcomes with masses.

    ``clamped`` records whether negative grid points were clamped to zero
    during discretization, so audits can exclude such cells.
    """

    outcomes: np.ndarray
    probabilities: np.ndarray
    clamped: bool = field(default=False)

    def __post_init__(self):
        outcomes = np.asarray(self.outcomes, dtype=float)
        probabilities = np.asarray(self.probabilities, dtype=float)
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "probabilities", probabilities)
        if outcomes.ndim != 1 or probabilities.ndim != 1:
            raise ValueError("outcomes and probabilities must be 1-D")
        if outcomes.shape != probabilities.shape:
            raise ValueError("outcomes and probabilities must have equal length")
        if outcomes.shape[0] < 2:
            raise ValueError("a lottery needs at least 2 outcomes")
        if np.any(np.diff(outcomes) < 0):
            raise ValueError("outcomes must be sorted ascending")
        if outcomes[0] < 0:
            raise ValueError("outcomes must be nonnegative")
        if np.any(probabilities < 0) or np.any(probabilities > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(probabilities.sum() - 1.0) > _PROB_SUM_TOL:
            raise ValueError(
                f"probabilities must sum to 1 (got {probabilities.sum()!r})"
            )

    @property
    def m(self) -> int:
        return self.outcomes.shape[0]


def std_normal_pdf(z: float) -> float:
    """Standard normal density (1/sqrt(2*pi)) * exp(-z**2/2)."""
    return float(_kernels.norm_pdf(float(z)))


def std_normal_cdf(z: float) -> float:
    """Standard normal CDF, computed as 0.5*erfc(-z/sqrt(2)).

    The complementary error function is a Cody-style rational minimax
    approximation (see _kernels.erfc); absolute accuracy is at machine
    precision, well under the 1e-7 requirement.
    """
    return float(_kernels.norm_cdf(float(z)))


def std_normal_quantile(p: float) -> float:
    """Inverse standard normal CDF for p in (0, 1).

    Safeguarded Newton iteration on std_normal_cdf; the result z
    satisfies |std_normal_cdf(z) - p| <= 1e-9.
    """
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile requires p in (0, 1), got {p!r}")
    return float(_kernels.norm_quantile(p))


def discretize_truncated_gaussian(
    c_mu: float, c_sigma: float, m: int = 10
) -> DiscreteCost:
    """Discretize a truncated-Gaussian cost into an M-outcome lottery.

    Degenerate case: c_sigma == 0 returns the single-support lottery on
    c_mu replicated across the M entries with uniform mass. Outcomes
    below zero (large c_sigma relative to c_mu) are clamped to zero and
    the clamping recorded in the ``clamped`` flag; bin masses are kept.
    """
    c_mu = float(c_mu)
    c_sigma = float(c_sigma)
    if c_mu < 0:
        raise ValueError("c_mu must be nonnegative")
    if c_sigma < 0:
        raise ValueError("c_sigma must be nonnegative")
    if m < 2:
        raise ValueError("m must be at least 2")
    if c_sigma == 0.0:
        return DiscreteCost(np.full(m, c_mu), np.full(m, 1.0 / m))
    outcomes = c_mu + c_sigma * _kernels.trunc_gauss_grid_coeffs(m)
    probs = _kernels.trunc_gauss_bin_probs(m)
    clamped = bool(outcomes[0] < 0.0)
    if clamped:
        outcomes = np.maximum(outcomes, 0.0)
    return DiscreteCost(outcomes, probs, clamped=clamped)
