"""Numeric kernels shared by the distribution, risk and field layers.

Every kernel here is a pure function of float64 scalars/arrays. The hot
ones (grid evaluation of the CPT field, lottery batches, the normal
special functions they lean on) are JIT-compiled with numba when it is
available. Setting the environment variable ``RISKCBF_DISABLE_NUMBA=1``
forces the pure NumPy/Python fallback; both paths produce identical
results (see tests/test_kernels.py and benchmarks/bench_kernels.py).
"""

from __future__ import annotations

import math
import os

import numpy as np

NUMBA_ENABLED = os.environ.get("RISKCBF_DISABLE_NUMBA", "").strip().lower() not in (
    "1",
    "true",
    "yes",
)
if NUMBA_ENABLED:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False


def _jit(func):
    """Apply numba.njit when enabled, otherwise leave the function as-is."""
    if NUMBA_ENABLED:
        return numba.njit(cache=True)(func)
    return func


_INV_SQRT_2PI = 0.3989422804014326779
_INV_SQRT_2 = 0.7071067811865475244
_INV_SQRT_PI = 0.5641895835477562869


@_jit
def erfc(x: float) -> float:
    """Complementary error function.

    Rational minimax approximation in three ranges (Cody's classic
    split at |x| = 0.46875 and 4.0); absolute error is at machine
    precision, far below the 1e-7 CDF accuracy target.
    """
    y = abs(x)
    if y <= 0.46875:
        z = y * y
        num = ((((1.85777706184603153e-1 * z + 3.16112374387056560e0) * z
                 + 1.13864154151050156e2) * z + 3.77485237685302021e2) * z)
        den = ((((z + 2.36012909523441209e1) * z + 2.44024637934444173e2) * z
                + 1.28261652607737228e3) * z)
        erf_val = x * (num + 3.20937758913846947e3) / (den + 2.84423683343917062e3)
        return 1.0 - erf_val
    if y <= 4.0:
        num = 2.15311535474403846e-8 * y
        num = (num + 5.64188496988670089e-1) * y
        num = (num + 8.88314979438837594e0) * y
        num = (num + 6.61191906371416295e1) * y
        num = (num + 2.98635138197400131e2) * y
        num = (num + 8.81952221241769090e2) * y
        num = (num + 1.71204761263407058e3) * y
        num = (num + 2.05107837782607147e3) * y
        den = y
        den = (den + 1.57449261107098347e1) * y
        den = (den + 1.17693950891312499e2) * y
        den = (den + 5.37181101862009858e2) * y
        den = (den + 1.62138957456669019e3) * y
        den = (den + 3.29079923573345963e3) * y
        den = (den + 4.36261909014324716e3) * y
        den = (den + 3.43936767414372164e3) * y
        result = math.exp(-y * y) * (num + 1.23033935479799725e3) / (
            den + 1.23033935480374942e3
        )
    else:
        z = 1.0 / (y * y)
        num = 1.63153871373020978e-2 * z
        num = (num + 3.05326634961232344e-1) * z
        num = (num + 3.60344899949804439e-1) * z
        num = (num + 1.25781726111229246e-1) * z
        num = (num + 1.60837851487422766e-2) * z
        den = z
        den = (den + 2.56852019228982242e0) * z
        den = (den + 1.87295284992346047e0) * z
        den = (den + 5.27905102951428412e-1) * z
        den = (den + 6.05183413124413191e-2) * z
        result = z * (num + 6.58749161529837803e-4) / (den + 2.33520497626869185e-3)
        result = (math.exp(-y * y) / y) * (_INV_SQRT_PI - result)
    if x < 0.0:
        return 2.0 - result
    return result


@_jit
def norm_pdf(z: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


@_jit
def norm_cdf(z: float) -> float:
    return 0.5 * erfc(-z * _INV_SQRT_2)


@_jit
def norm_quantile(p: float) -> float:
    """Inverse of norm_cdf via safeguarded Newton iteration.

    Caller must ensure p is strictly inside (0, 1). Terminates when
    |cdf(z) - p| <= 1e-13, well inside the 1e-9 contract.
    """
    if p < 0.5:
        z = -math.sqrt(-2.0 * math.log(p))
    else:
        z = math.sqrt(-2.0 * math.log(1.0 - p))
    lo = -40.0
    hi = 40.0
    for _ in range(200):
        f = norm_cdf(z) - p
        if abs(f) <= 1e-13:
            break
        if f > 0.0:
            hi = min(hi, z)
        else:
            lo = max(lo, z)
        d = norm_pdf(z)
        z_new = z - f / d if d > 0.0 else 0.5 * (lo + hi)
        if z_new <= lo or z_new >= hi:
            z_new = 0.5 * (lo + hi)
        if z_new == z:
            break
        z = z_new
    return z


@_jit
def trunc_gauss_bin_probs(m: int) -> np.ndarray:
    """Bin masses of the 3-sigma truncated standard normal split into m
    equal-width bins; masses are Gaussian CDF differences re-normalized
    by Z = cdf(3) - cdf(-3)."""
    z_norm = norm_cdf(3.0) - norm_cdf(-3.0)
    probs = np.empty(m)
    prev = norm_cdf(-3.0)
    for j in range(1, m + 1):
        cur = norm_cdf(-3.0 + 6.0 * j / m)
        probs[j - 1] = (cur - prev) / z_norm
        prev = cur
    return probs


@_jit
def trunc_gauss_grid_coeffs(m: int) -> np.ndarray:
    """Ascending outcome grid in sigma units: -3 + 6*(j-1)/m for j=1..m.

    Each outcome sits at the lower edge of its probability bin; the top
    bin closes at the upper truncation bound +3.
    """
    g = np.empty(m)
    for j in range(m):
        g[j] = -3.0 + 6.0 * j / m
    return g


@_jit
def prob_weight_scalar(p: float, alpha: float, beta: float) -> float:
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return 1.0
    return math.exp(-beta * (-math.log(p)) ** alpha)


@_jit
def decision_weights_kernel(probs: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """Cumulative decision weights over ascending-ranked outcomes.

    With S_i the upper-tail probability sum from outcome i, the weight
    of outcome i is w(S_i) - w(S_{i+1}), anchored by S_{m+1} = 0.
    """
    m = probs.shape[0]
    out = np.empty(m)
    tail = 0.0
    w_next = 0.0
    for i in range(m - 1, -1, -1):
        tail += probs[i]
        w_cur = prob_weight_scalar(tail, alpha, beta)
        out[i] = w_cur - w_next
        w_next = w_cur
    return out


@_jit
def cpt_lottery_kernel(
    outcomes: np.ndarray,
    probs: np.ndarray,
    alpha: float,
    beta: float,
    gamma: float,
    lam: float,
) -> float:
    weights = decision_weights_kernel(probs, alpha, beta)
    total = 0.0
    for i in range(outcomes.shape[0]):
        total += lam * outcomes[i] ** gamma * weights[i]
    return total


@_jit
def cpt_mu_sigma_value(
    c_mu: float,
    c_sigma: float,
    gcoef: np.ndarray,
    pi_weights: np.ndarray,
    gamma: float,
    lam: float,
) -> float:
    """CPT value of the truncated-Gaussian discretization at (c_mu, c_sigma).

    pi_weights are the decision weights of the fixed bin probabilities
    (they do not depend on c_mu, c_sigma). Grid values below zero are
    clamped, mirroring the discretizer.
    """
    total = 0.0
    for i in range(gcoef.shape[0]):
        c = c_mu + c_sigma * gcoef[i]
        if c < 0.0:
            c = 0.0
        total += lam * c ** gamma * pi_weights[i]
    return total


@_jit
def cpt_mu_sigma_partials(
    c_mu: float,
    c_sigma: float,
    gcoef: np.ndarray,
    pi_weights: np.ndarray,
    gamma: float,
    lam: float,
):
    """d/d(c_mu) and d/d(c_sigma) of cpt_mu_sigma_value at fixed weights.

    Caller must ensure every grid value c_mu + c_sigma*g is positive;
    the gamma-1 exponent is singular at zero.
    """
    d_mu = 0.0
    d_sigma = 0.0
    for i in range(gcoef.shape[0]):
        c = c_mu + c_sigma * gcoef[i]
        t = lam * gamma * c ** (gamma - 1.0) * pi_weights[i]
        d_mu += t
        d_sigma += t * gcoef[i]
    return d_mu, d_sigma


def _cpt_grid_loop(
    mu: np.ndarray,
    sigma: np.ndarray,
    gcoef: np.ndarray,
    pi_weights: np.ndarray,
    gamma: float,
    lam: float,
) -> np.ndarray:
    out = np.empty(mu.shape[0])
    for k in range(mu.shape[0]):
        acc = 0.0
        for i in range(gcoef.shape[0]):
            c = mu[k] + sigma[k] * gcoef[i]
            if c < 0.0:
                c = 0.0
            acc += lam * c ** gamma * pi_weights[i]
        out[k] = acc
    return out


def cpt_grid_numpy(
    mu: np.ndarray,
    sigma: np.ndarray,
    gcoef: np.ndarray,
    pi_weights: np.ndarray,
    gamma: float,
    lam: float,
) -> np.ndarray:
    """Vectorized fallback for the CPT field kernel."""
    c = mu[:, None] + sigma[:, None] * gcoef[None, :]
    np.maximum(c, 0.0, out=c)
    return lam * ((c ** gamma) @ pi_weights)


if NUMBA_ENABLED:
    cpt_grid_numba = numba.njit(cache=True)(_cpt_grid_loop)
    cpt_grid = cpt_grid_numba
else:
    cpt_grid_numba = None
    cpt_grid = cpt_grid_numpy


def warmup() -> None:
    """Trigger JIT compilation of every kernel (no-op on the fallback path)."""
    g = trunc_gauss_grid_coeffs(4)
    p = trunc_gauss_bin_probs(4)
    norm_quantile(0.25)
    decision_weights_kernel(p, 0.74, 1.0)
    cpt_lottery_kernel(np.abs(g) + 1.0, p, 0.74, 1.0, 0.88, 2.0)
    cpt_mu_sigma_value(5.0, 1.0, g, p, 0.88, 2.0)
    cpt_mu_sigma_partials(5.0, 1.0, g, p, 0.88, 2.0)
    cpt_grid(np.full(2, 5.0), np.full(2, 1.0), g, p, 0.88, 2.0)
