"""Risk perception models over discrete cost lotteries.

Three model families share one interface: expected risk (ER),
conditional value at risk (CVaR, parameter q), and cumulative prospect
theory (CPT, parameters alpha, beta, gamma, lambda). CPT ranks outcomes
ascending and weights them through the probability weighting function
w(p) = exp(-beta * (-log p)**alpha) applied to upper-tail sums, so high
costs are distorted through the tail of w.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

from . import _kernels
from .distributions import DiscreteCost

CVAR_CONVENTIONS = ("paper", "rockafellar")


class SingularPartialError(ValueError):
    """CPT partials are undefined when a grid outcome hits zero (the
    gamma-1 exponent is singular there)."""


@dataclass(frozen=True)
class ExpectedRisk:
    """Plain expectation of the cost lottery."""


@dataclass(frozen=True)
class CVaR:
    """Expectation over the worst fraction q of outcomes.

    ``convention`` selects the Gaussian closed form used for fields and
    partials: "paper" divides the pdf/quantile term by q, "rockafellar"
    by 1 - q (the textbook Gaussian-CVaR formula). The discrete value
    is convention-independent.
    """

    q: float
    convention: str = "paper"

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"CVaR q must lie in [0, 1], got {self.q!r}")
        if self.convention not in CVAR_CONVENTIONS:
            raise ValueError(f"unknown CVaR convention {self.convention!r}")


@dataclass(frozen=True)
class CPT:
    """Cumulative prospect theory parameters.

    alpha, beta > 0 tune uncertainty perception, gamma in [0, 1] risk
    sensitivity, lam >= 1 risk aversion.
    """

    alpha: float
    beta: float
    gamma: float
    lam: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("CPT alpha and beta must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"CPT gamma must lie in [0, 1], got {self.gamma!r}")
        if self.lam < 1.0:
            raise ValueError(f"CPT lambda must be >= 1, got {self.lam!r}")


RiskSpec = Union[ExpectedRisk, CVaR, CPT]


@dataclass(frozen=True)
class RiskPartials:
    """Sensitivities of a risk value to the cost mean and deviation."""

    d_mu: float
    d_sigma: float


def utility(c: float, gamma: float, lam: float) -> float:
    """Perceived cost v(c) = lam * c**gamma for c >= 0; v(0) = 0."""
    if c < 0:
        raise ValueError("utility is defined for nonnegative costs")
    return lam * c ** gamma


def prob_weight(p: float, alpha: float, beta: float) -> float:
    """Probability weighting w(p) = exp(-beta * (-log p)**alpha).

    w(0) = 0 by definition and w(1) = 1.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p!r}")
    return float(_kernels.prob_weight_scalar(float(p), float(alpha), float(beta)))


def decision_weights(probabilities, alpha: float, beta: float) -> np.ndarray:
    """Cumulative decision weights for ascending-ranked outcomes.

    With upper-tail sums S_i = p_i + ... + p_M, the weight of outcome i
    is w(S_i) - w(S_{i+1}), anchored by the empty tail S_{M+1} = 0.
    At alpha = beta = 1 the weights reduce to the raw probabilities.
    """
    probs = np.asarray(probabilities, dtype=float)
    return _kernels.decision_weights_kernel(probs, float(alpha), float(beta))


def er_value(cost: DiscreteCost) -> float:
    """Expected risk: sum of outcome * probability."""
    return float(cost.outcomes @ cost.probabilities)


def cvar_value(cost: DiscreteCost, q: float) -> float:
    """Discrete CVaR: mean of the outcomes at or above the q-quantile.

    d* is the smallest outcome whose cumulative probability reaches q
    (ties at exactly q resolve to that outcome); the value is the
    probability-weighted mean over outcomes >= d*. q = 0 gives the
    plain expectation, q = 1 the worst-case outcome.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"CVaR q must lie in [0, 1], got {q!r}")
    if q == 0.0:
        return er_value(cost)
    if q == 1.0:
        return float(cost.outcomes[-1])
    cum = np.cumsum(cost.probabilities)
    j = int(np.searchsorted(cum, q, side="left"))
    j = min(j, cost.m - 1)
    tail = cost.outcomes >= cost.outcomes[j]
    mass = cost.probabilities[tail].sum()
    return float((cost.outcomes[tail] @ cost.probabilities[tail]) / mass)


def cvar_gaussian_closed_form(
    c_mu: float, c_sigma: float, q: float, convention: str = "paper"
) -> float:
    """Closed-form CVaR of a Gaussian cost: c_mu + c_sigma * k(q).

    k(q) = pdf(quantile(q)) / q under the "paper" convention and
    pdf(quantile(q)) / (1 - q) under "rockafellar". q = 0 collapses to
    the expectation c_mu; q = 1 falls back to the 3-sigma truncation
    bound c_mu + 3*c_sigma.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"CVaR q must lie in [0, 1], got {q!r}")
    if convention not in CVAR_CONVENTIONS:
        raise ValueError(f"unknown CVaR convention {convention!r}")
    if q == 0.0:
        return float(c_mu)
    if q == 1.0:
        return float(c_mu + 3.0 * c_sigma)
    return float(c_mu + c_sigma * _cvar_sigma_gain(q, convention))


def _cvar_sigma_gain(q: float, convention: str) -> float:
    z = _kernels.norm_quantile(float(q))
    denom = q if convention == "paper" else 1.0 - q
    return float(_kernels.norm_pdf(z) / denom)


@lru_cache(maxsize=256)
def _grid_coeffs(m: int) -> np.ndarray:
    g = _kernels.trunc_gauss_grid_coeffs(m)
    g.setflags(write=False)
    return g


@lru_cache(maxsize=256)
def cpt_pi_weights(m: int, alpha: float, beta: float) -> np.ndarray:
    """Decision weights of the truncated-Gaussian bin masses.

    The bin masses depend only on M, so the weights are constant across
    every (c_mu, c_sigma) cell and can be shared by field evaluation.
    """
    pi = _kernels.decision_weights_kernel(
        _kernels.trunc_gauss_bin_probs(m), float(alpha), float(beta)
    )
    pi.setflags(write=False)
    return pi


def cpt_value(cost: DiscreteCost, theta: CPT) -> float:
    """CPT value: sum of v(c_i) * Pi_i over the ascending outcomes."""
    return float(
        _kernels.cpt_lottery_kernel(
            cost.outcomes,
            cost.probabilities,
            theta.alpha,
            theta.beta,
            theta.gamma,
            theta.lam,
        )
    )


def cpt_closed_form(c_mu: float, c_sigma: float, theta: CPT, m: int = 10) -> float:
    """CPT value of the truncated-Gaussian cost directly from (c_mu, c_sigma).

    Equals cpt_value on the discretized lottery to within 1e-9; grid
    points below zero are clamped like the discretizer does.
    """
    return float(
        _kernels.cpt_mu_sigma_value(
            float(c_mu),
            float(c_sigma),
            _grid_coeffs(m),
            cpt_pi_weights(m, theta.alpha, theta.beta),
            theta.gamma,
            theta.lam,
        )
    )


def partials(
    spec: RiskSpec, c_mu: float, c_sigma: float, m: int = 10
) -> RiskPartials:
    """Sensitivity of the risk value to (c_mu, c_sigma).

    ER is (1, 0) exactly. CVaR is (1, k(q)) from the Gaussian closed
    form, with k(0) = 0 (the ER limit) and k(1) = 3 (the truncation
    bound fallback). CPT differentiates the closed form at fixed
    decision weights; it requires every grid value to be positive.
    """
    c_mu = float(c_mu)
    c_sigma = float(c_sigma)
    if isinstance(spec, ExpectedRisk):
        return RiskPartials(1.0, 0.0)
    if isinstance(spec, CVaR):
        if spec.q == 0.0:
            return RiskPartials(1.0, 0.0)
        if spec.q == 1.0:
            return RiskPartials(1.0, 3.0)
        return RiskPartials(1.0, _cvar_sigma_gain(spec.q, spec.convention))
    if isinstance(spec, CPT):
        if c_mu - 3.0 * c_sigma <= 0.0:
            raise SingularPartialError(
                "CPT partials need strictly positive grid values "
                f"(c_mu={c_mu!r}, c_sigma={c_sigma!r})"
            )
        d_mu, d_sigma = _kernels.cpt_mu_sigma_partials(
            c_mu,
            c_sigma,
            _grid_coeffs(m),
            cpt_pi_weights(m, spec.alpha, spec.beta),
            spec.gamma,
            spec.lam,
        )
        return RiskPartials(float(d_mu), float(d_sigma))
    raise TypeError(f"unknown risk spec {spec!r}")


def risk_value(spec: RiskSpec, cost: DiscreteCost) -> float:
    """Evaluate any risk spec on a discrete lottery."""
    if isinstance(spec, ExpectedRisk):
        return er_value(cost)
    if isinstance(spec, CVaR):
        return cvar_value(cost, spec.q)
    if isinstance(spec, CPT):
        return cpt_value(cost, spec)
    raise TypeError(f"unknown risk spec {spec!r}")


_SPEC_RE = re.compile(r"^\s*(er|cvar|cpt)\s*(?:\(([^)]*)\))?\s*$", re.IGNORECASE)


def parse_spec(text: str, cvar_convention: str = "paper") -> RiskSpec:
    """Parse a spec string: ``er``, ``cvar(q)`` or ``cpt(a, b, g, l)``."""
    match = _SPEC_RE.match(text)
    if not match:
        raise ValueError(f"cannot parse risk spec {text!r}")
    kind = match.group(1).lower()
    args_text = match.group(2)
    args = []
    if args_text is not None and args_text.strip():
        try:
            args = [float(tok) for tok in args_text.split(",")]
        except ValueError:
            raise ValueError(f"non-numeric parameter in risk spec {text!r}") from None
    if kind == "er":
        if args:
            raise ValueError("er takes no parameters")
        return ExpectedRisk()
    if kind == "cvar":
        if len(args) != 1:
            raise ValueError("cvar takes exactly one parameter: cvar(q)")
        return CVaR(args[0], convention=cvar_convention)
    if len(args) != 4:
        raise ValueError("cpt takes four parameters: cpt(alpha, beta, gamma, lambda)")
    return CPT(*args)


def spec_label(spec: RiskSpec) -> str:
    """Stable, filename-safe label for a spec."""
    if isinstance(spec, ExpectedRisk):
        return "er"
    if isinstance(spec, CVaR):
        return f"cvar_q{_fmt(spec.q)}"
    if isinstance(spec, CPT):
        return (
            f"cpt_a{_fmt(spec.alpha)}_b{_fmt(spec.beta)}"
            f"_g{_fmt(spec.gamma)}_l{_fmt(spec.lam)}"
        )
    raise TypeError(f"unknown risk spec {spec!r}")


def _fmt(x: float) -> str:
    text = f"{x:g}"
    return text.replace("-", "m").replace(".", "p")
