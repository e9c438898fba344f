"""Hermite-coefficient machinery for activation expectation kernels.

Everything here is stated against the standard Gaussian *probability*
measure.  The orthonormal probabilists' polynomials ``p_0 = 1``, ``p_1 = u``,
``p_2 = (u^2 - 1)/sqrt(2)``, ... satisfy ``E[p_j p_k] = delta_jk`` and, for a
rho-correlated standard Gaussian pair, ``E[p_j(u) p_j(u')] = rho^j``.

Coefficients defined against the bare weight ``exp(-u^2/2)`` (no
``1/sqrt(2 pi)``) are larger by ``sqrt(2 pi)``; every ratio-type constant
(tail ratios, expectation-matrix entries relative to the linear term) is
identical under both conventions.  ``sigma_hat`` has supremum 1 here;
``sqrt(2 pi) = 2.5066...`` rescales it to the bare-weight convention.

Quadrature rules are built by Golub-Welsch on the Jacobi matrix rather than
``numpy.polynomial.hermite_e.hermegauss``, whose weight computation
overflows near 512 nodes.  Fixed rules degrade for arguments beyond y ~ 5,
so limit constants are evaluated through closed-form sign-function
coefficients and Parseval identities instead of brute large-y quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

DEFAULT_POINTS = 64
MAX_POINTS = 512
ESCALATION_RTOL = 1e-9

SQRT_2PI = math.sqrt(2.0 * math.pi)
SIGMA_HAT_SUP = 1.0
SIGMA_HAT_SUP_UNNORMALIZED = SQRT_2PI
TAU_SUP = 1.0


class TruncationError(RuntimeError):
    """A series evaluation could not reach the requested residual."""


@lru_cache(maxsize=16)
def gauss_hermite_rule(n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and probability weights for E_{u~N(0,1)}[f(u)] ~ sum w_i f(x_i)."""
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    off = np.sqrt(np.arange(1.0, n_points))
    jacobi = np.zeros((n_points, n_points))
    idx = np.arange(n_points - 1)
    jacobi[idx, idx + 1] = off
    jacobi[idx + 1, idx] = off
    nodes, vecs = np.linalg.eigh(jacobi)
    weights = vecs[0] ** 2
    weights = weights / weights.sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def hermite_eval_upto(max_degree: int, u: np.ndarray) -> np.ndarray:
    """Evaluate p_0..p_max_degree at u, stacked along axis 0.

    Three-term recurrence on the orthonormal family:
    p_{k+1} = (u p_k - sqrt(k) p_{k-1}) / sqrt(k+1).
    """
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    u = np.asarray(u, dtype=float)
    out = np.empty((max_degree + 1,) + u.shape, dtype=float)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = u
    for k in range(1, max_degree):
        out[k + 1] = (u * out[k] - math.sqrt(k) * out[k - 1]) / math.sqrt(k + 1)
    return out


def hermite_eval(degree: int, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return hermite_eval_upto(degree, u)[degree]


def gauss_hermite_expectation(f, n_points: int = DEFAULT_POINTS) -> float:
    """E_{u~N(0,1)}[f(u)] by a fixed Gauss-Hermite rule."""
    nodes, weights = gauss_hermite_rule(n_points)
    return float(weights @ np.asarray(f(nodes), dtype=float))


def _escalate(evaluate, n_points: int | None):
    """Run `evaluate(n)` with n doubling from the default until stable.

    Stops when successive estimates agree within ESCALATION_RTOL (max-abs),
    or at MAX_POINTS, whichever comes first.  An explicit n_points skips
    escalation.
    """
    if n_points is not None:
        return evaluate(n_points)
    n = DEFAULT_POINTS
    prev = evaluate(n)
    while n < MAX_POINTS:
        n *= 2
        cur = evaluate(n)
        if np.max(np.abs(np.asarray(cur) - np.asarray(prev))) < ESCALATION_RTOL:
            return cur
        prev = cur
    return prev


def _tanh_values(y: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    return np.tanh(np.multiply.outer(y, nodes))


def _sech2_values(y: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    t = np.tanh(np.multiply.outer(y, nodes))
    return 1.0 - t * t


def coeff_g_table(max_degree: int, y, n_points: int | None = None) -> np.ndarray:
    """Hermite coefficients of u -> tanh(y u) for degrees 0..max_degree.

    Returns shape ``y.shape + (max_degree + 1,)``.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("y must be >= 0")

    def evaluate(n):
        nodes, weights = gauss_hermite_rule(n)
        p = hermite_eval_upto(max_degree, nodes)
        return _tanh_values(np.atleast_1d(y), nodes) @ (weights[:, None] * p.T)

    table = _escalate(evaluate, n_points)
    return table.reshape(y.shape + (max_degree + 1,))


def coeff_tau_table(max_degree: int, z_sq, n_points: int | None = None) -> np.ndarray:
    """Hermite coefficients of u -> sech^2(sqrt(z_sq) u), degrees 0..max_degree."""
    z_sq = np.asarray(z_sq, dtype=float)
    if np.any(z_sq < 0):
        raise ValueError("z_sq must be >= 0")
    y = np.sqrt(z_sq)

    def evaluate(n):
        nodes, weights = gauss_hermite_rule(n)
        p = hermite_eval_upto(max_degree, nodes)
        return _sech2_values(np.atleast_1d(y), nodes) @ (weights[:, None] * p.T)

    table = _escalate(evaluate, n_points)
    return table.reshape(z_sq.shape + (max_degree + 1,))


def coeff_g(degree: int, y, n_points: int | None = None):
    """g_degree(y) = E[tanh(y u) p_degree(u)]."""
    out = coeff_g_table(degree, y, n_points)[..., degree]
    return float(out) if out.ndim == 0 else out


def coeff_tau(degree: int, z_sq, n_points: int | None = None):
    """tau_degree(z_sq) = E[sech^2(sqrt(z_sq) u) p_degree(u)]."""
    out = coeff_tau_table(degree, z_sq, n_points)[..., degree]
    return float(out) if out.ndim == 0 else out


def sigma_hat(z_sq, n_points: int | None = None):
    """sigma_hat(z_sq) = g_1(sqrt(z_sq)) / sqrt(z_sq), continuously extended to 1 at 0.

    Non-increasing in z_sq; supremum 1 under the probability-measure
    convention (sqrt(2 pi) times smaller than the bare-weight value).
    """
    z_sq = np.asarray(z_sq, dtype=float)
    if np.any(z_sq < 0):
        raise ValueError("z_sq must be >= 0")
    y = np.sqrt(z_sq)
    flat = np.atleast_1d(y)
    out = np.ones_like(flat)
    pos = flat > 0
    if np.any(pos):
        out[pos] = coeff_g(1, flat[pos], n_points) / flat[pos]
    out = out.reshape(y.shape)
    return float(out) if out.ndim == 0 else out


def sign_coefficient(degree: int) -> float:
    """Closed-form Hermite coefficient of the sign function.

    E[sign(u) p_{2i+1}(u)] = sqrt(2/pi) (-1)^i (2i-1)!! / sqrt((2i+1)!);
    even degrees vanish.  This is the y -> infinity limit of g_degree(y).
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    if degree % 2 == 0:
        return 0.0
    i = (degree - 1) // 2
    log_mag = 0.5 * math.log(2.0 / math.pi)
    # (2i-1)!! / sqrt((2i+1)!) computed in log space
    log_mag += sum(math.log(2 * j - 1) for j in range(1, i + 1))
    log_mag -= 0.5 * math.lgamma(degree + 1)
    return (-1.0) ** i * math.exp(log_mag)


@dataclass(frozen=True)
class BetaResult:
    """Tail-ratio constant sum_{i>=1} g_{2i+1}^2 / g_1^2 in the saturation limit."""

    value: float
    partial_sum: float
    num_terms: int
    truncation_residual: float


def beta_constant(
    max_terms: int = 1000,
    partial_only: bool = False,
    residual_tol: float = 1e-6,
) -> BetaResult:
    """Tail-ratio constant of tanh via its saturation (sign-function) limit.

    The limit's coefficient ratios are t_i = ((2i-1)!!)^2 / (2i+1)!, and
    Parseval for the sign function (E[sign^2] = 1, g_1 = sqrt(2/pi)) sums
    the whole series to (1 - 2/pi) / (2/pi) = (pi - 2)/2 exactly.  The raw
    partial sums converge like i^{-1/2}, so `value` uses the closed form;
    the partial sum is reported for diagnostics.  With ``partial_only`` the
    truncated sum itself is returned and a residual above ``residual_tol``
    raises TruncationError.
    """
    if max_terms < 1:
        raise ValueError("max_terms must be >= 1")
    exact = (1.0 - 2.0 / math.pi) / (2.0 / math.pi)
    partial = 0.0
    term = 1.0  # t_0, the g_1 term itself (excluded from the sum)
    for i in range(1, max_terms + 1):
        term *= (2 * i - 1) ** 2 / ((2 * i) * (2 * i + 1))
        partial += term
    residual = exact - partial
    if partial_only:
        if residual > residual_tol:
            raise TruncationError(
                f"partial sum with L={max_terms} terms has residual "
                f"{residual:.3e} > {residual_tol:.1e}"
            )
        return BetaResult(partial, partial, max_terms, residual)
    return BetaResult(exact, partial, max_terms, residual)


@dataclass(frozen=True)
class FirstLayerBetaResult:
    """Tail-ratio constant sum_{i>=1} tau_{2i}(b)^2 / tau_0(b)^2."""

    value: float
    parseval_value: float
    norm_sq_bound: float
    num_pairs: int
    truncation_residual: float


def beta_first_layer(
    norm_sq_bound: float,
    residual_tol: float = 1e-6,
    max_degree: int = 300,
    n_points: int | None = None,
) -> FirstLayerBetaResult:
    """Even-coefficient tail ratio of sech^2 at squared-norm bound b.

    For a K-tap filter with unit-Frobenius shift the feature rows satisfy
    ||z||^2 <= K, so the constant is evaluated at b = K.  The series is
    accumulated until its Parseval-certified residual (relative to tau_0^2)
    drops below ``residual_tol``; the total sum_{i>=0} tau_{2i}^2 equals
    E[sech^4(sqrt(b) u)] because odd coefficients vanish.  Total and
    coefficients share one quadrature rule, which makes the residual a
    discrete Bessel gap and hence nonnegative to round-off.
    """
    if norm_sq_bound <= 0:
        raise ValueError("norm_sq_bound must be > 0")
    n = MAX_POINTS if n_points is None else n_points
    if max_degree > n - 1:
        raise ValueError("max_degree must stay below the quadrature size")
    nodes, weights = gauss_hermite_rule(n)
    s2 = _sech2_values(np.asarray(norm_sq_bound) ** 0.5, nodes)
    p = hermite_eval_upto(max_degree, nodes)
    taus = p @ (weights * s2)
    total = float(weights @ (s2 * s2))
    tau0_sq = taus[0] ** 2
    even_sq = taus[2::2] ** 2
    tail_total = total - tau0_sq
    partial = 0.0
    for i, t_sq in enumerate(even_sq, start=1):
        partial += t_sq
        residual = (tail_total - partial) / tau0_sq
        if residual < residual_tol:
            return FirstLayerBetaResult(
                value=partial / tau0_sq,
                parseval_value=tail_total / tau0_sq,
                norm_sq_bound=float(norm_sq_bound),
                num_pairs=i,
                truncation_residual=residual,
            )
    raise TruncationError(
        f"series residual {residual:.3e} still above {residual_tol:.1e} "
        f"at degree {max_degree}"
    )


def correlated_pair_expectation(f, g, rho: float, n_points: int = DEFAULT_POINTS) -> float:
    """E[f(u) g(u')] for rho-correlated standard Gaussians, by a tensor rule.

    Uses u' = rho u + sqrt(1 - rho^2) v with independent u, v.
    """
    if not -1.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [-1, 1]")
    nodes, weights = gauss_hermite_rule(n_points)
    u = nodes[:, None]
    v = nodes[None, :]
    uprime = rho * u + math.sqrt(max(0.0, 1.0 - rho * rho)) * v
    vals = np.asarray(f(u * np.ones_like(uprime))) * np.asarray(g(uprime))
    return float(weights @ vals @ weights)


def activation_sq_expectation(y: float, kind: str, n_points: int = MAX_POINTS) -> float:
    """E[a(y u)^2] for a = tanh or sech^2, with the same rule as the coefficients."""
    nodes, weights = gauss_hermite_rule(n_points)
    if kind == "tanh":
        vals = _tanh_values(np.asarray(y, dtype=float), nodes)
    elif kind == "sech2":
        vals = _sech2_values(np.asarray(y, dtype=float), nodes)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return float(weights @ (vals * vals))


def parseval_gap(y: float, max_degree: int, n_points: int = MAX_POINTS) -> float:
    """E[tanh(y u)^2] minus the energy captured by degrees <= max_degree.

    Computed end to end with one rule, so the gap is a discrete Bessel gap:
    nonnegative up to round-off and non-increasing in max_degree.
    """
    nodes, weights = gauss_hermite_rule(n_points)
    t = _tanh_values(np.asarray(y, dtype=float), nodes)
    p = hermite_eval_upto(max_degree, nodes)
    coeffs = p @ (weights * t)
    total = float(weights @ (t * t))
    return total - float(coeffs @ coeffs)


@dataclass(frozen=True)
class GridCheckResult:
    kind: str
    degrees: tuple[int, ...]
    grid: np.ndarray
    violations: tuple[tuple[int, float], ...]
    worst_margin: float

    @property
    def passed(self) -> bool:
        return not self.violations


def verify_sign_constancy(
    kind: str = "tanh_odd",
    degrees: tuple[int, ...] = (1, 3, 5, 7, 9),
    grid: np.ndarray | None = None,
    n_points: int = MAX_POINTS,
) -> GridCheckResult:
    """Check each coefficient keeps one strict sign across a y grid.

    ``tanh_odd`` checks g_degree over y in the grid, ``sech2_even`` checks
    tau_degree with the grid read as squared norms.
    """
    if grid is None:
        grid = np.geomspace(0.1, 10.0, 40)
    grid = np.asarray(grid, dtype=float)
    if kind == "tanh_odd":
        table = coeff_g_table(max(degrees), grid, n_points)
    elif kind == "sech2_even":
        table = coeff_tau_table(max(degrees), grid, n_points)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    violations = []
    worst = math.inf
    for deg in degrees:
        vals = table[:, deg]
        ref_sign = math.copysign(1.0, vals[np.argmax(np.abs(vals))])
        margin = float(np.min(ref_sign * vals))
        worst = min(worst, margin)
        if margin <= 0.0:
            violations.append((deg, margin))
    return GridCheckResult(kind, tuple(degrees), grid, tuple(violations), worst)


def verify_ratio_monotonicity(
    kind: str = "tanh_odd",
    degrees: tuple[int, ...] = (3, 5, 7, 9),
    grid: np.ndarray | None = None,
    tol: float = 1e-7,
    n_points: int = MAX_POINTS,
) -> GridCheckResult:
    """Check |coeff_degree / coeff_base| is non-decreasing along the grid.

    Base degree is 1 for ``tanh_odd`` and 0 for ``sech2_even``.  Steps may
    regress by at most ``tol``.
    """
    if grid is None:
        grid = np.geomspace(0.1, 10.0, 40)
    grid = np.asarray(grid, dtype=float)
    if kind == "tanh_odd":
        table = coeff_g_table(max(degrees), grid, n_points)
        base = table[:, 1]
    elif kind == "sech2_even":
        table = coeff_tau_table(max(degrees), grid, n_points)
        base = table[:, 0]
    else:
        raise ValueError(f"unknown kind {kind!r}")
    violations = []
    worst = math.inf
    for deg in degrees:
        ratio = np.abs(table[:, deg] / base)
        steps = np.diff(ratio)
        margin = float(steps.min())
        worst = min(worst, margin)
        if margin < -tol:
            violations.append((deg, margin))
    return GridCheckResult(kind, tuple(degrees), grid, tuple(violations), worst)


@dataclass(frozen=True)
class ExpansionConstants:
    """Constants entering the alignment lower bounds for a K-tap architecture.

    ``rho`` is sigma_hat(sum_k nu^{2k})^2 and bounds the squared smallest
    diagonal rescaling of the linear kernel; ``rho_first_layer`` is the
    tau_0 analogue.  The guarantee/penalty pairs assemble the conditional
    bound A >= (gain - penalty / xi) A_lin for each layer.
    """

    num_taps: int
    spectral_bound: float
    norm_sq_bound: float
    rho: float
    rho_first_layer: float
    beta: float
    beta_first: float
    gain_second_layer: float
    penalty_second_layer: float
    gain_first_layer: float
    penalty_first_layer: float
    sigma_hat_sup: float = SIGMA_HAT_SUP
    sigma_hat_sup_unnormalized: float = SIGMA_HAT_SUP_UNNORMALIZED


def expansion_constants(
    num_taps: int,
    spectral_bound: float = 1.0,
    n_points: int | None = None,
) -> ExpansionConstants:
    if num_taps < 1:
        raise ValueError("num_taps must be >= 1")
    if spectral_bound <= 0:
        raise ValueError("spectral_bound must be > 0")
    norm_sq = float(np.sum(spectral_bound ** (2.0 * np.arange(num_taps))))
    rho = float(sigma_hat(norm_sq, n_points)) ** 2
    rho1 = float(coeff_tau(0, norm_sq, n_points)) ** 2
    beta = beta_constant().value
    beta1 = beta_first_layer(norm_sq, n_points=n_points).value
    return ExpansionConstants(
        num_taps=num_taps,
        spectral_bound=spectral_bound,
        norm_sq_bound=norm_sq,
        rho=rho,
        rho_first_layer=rho1,
        beta=beta,
        beta_first=beta1,
        gain_second_layer=rho * (1.0 + beta / 2.0),
        penalty_second_layer=(beta / 2.0) * (SIGMA_HAT_SUP / rho) ** 2,
        gain_first_layer=rho1 * (1.0 + beta1 / 2.0),
        penalty_first_layer=(beta1 / 2.0) * (TAU_SUP / rho1) ** 2,
    )


def self_check(n_points: int = DEFAULT_POINTS) -> dict:
    """Full self-verification of the Hermite layer; payload for the CLI.

    Returns a JSON-ready report; ``violations`` counts failed checks.
    """
    report: dict = {"schema_version": 1}
    violations = 0

    nodes, weights = gauss_hermite_rule(max(n_points, 16))
    p = hermite_eval_upto(10, nodes)
    gram = (p * weights) @ p.T
    ortho_residual = float(np.abs(gram - np.eye(11)).max())
    ortho_ok = ortho_residual < 1e-8
    violations += not ortho_ok
    report["orthonormality"] = {"max_residual": ortho_residual, "passed": ortho_ok}

    pair_worst = 0.0
    for rho in (-0.9, -0.3, 0.0, 0.5, 0.99):
        for j in range(7):
            for k in range(7):
                got = correlated_pair_expectation(
                    lambda u, j=j: hermite_eval(j, u),
                    lambda u, k=k: hermite_eval(k, u),
                    rho,
                    n_points=max(n_points, 16),
                )
                want = rho**j if j == k else 0.0
                pair_worst = max(pair_worst, abs(got - want))
    pair_ok = pair_worst < 1e-6
    violations += not pair_ok
    report["correlated_pair_identity"] = {"max_residual": pair_worst, "passed": pair_ok}

    gaps_ok = True
    gaps = {}
    for y in (0.5, 2.0, 8.0):
        series = [parseval_gap(y, L) for L in (5, 11, 21)]
        gaps[str(y)] = series
        gaps_ok &= all(g >= -1e-9 for g in series)
        gaps_ok &= series[0] >= series[1] >= series[2]
    violations += not gaps_ok
    report["parseval_gaps"] = {"by_scale": gaps, "passed": gaps_ok}

    beta = beta_constant()
    beta_ok = abs(beta.value - (math.pi - 2.0) / 2.0) < 1e-12
    violations += not beta_ok
    report["beta"] = {
        "value": beta.value,
        "partial_sum": beta.partial_sum,
        "num_terms": beta.num_terms,
        "passed": beta_ok,
    }

    b1 = beta_first_layer(3.0)
    b1_ok = abs(b1.value - 0.732) < 2e-2
    violations += not b1_ok
    report["beta_first_layer_3"] = {
        "value": b1.value,
        "parseval_value": b1.parseval_value,
        "num_pairs": b1.num_pairs,
        "truncation_residual": b1.truncation_residual,
        "passed": b1_ok,
    }

    sup_scaled = SIGMA_HAT_SUP * SQRT_2PI
    sup_ok = abs(sup_scaled - 2.5066282746310002) < 1e-12 and sup_scaled <= 2.51
    violations += not sup_ok
    report["sigma_hat_sup"] = {
        "value": SIGMA_HAT_SUP,
        "unnormalized": sup_scaled,
        "passed": sup_ok,
    }

    for name, check in (
        ("sign_constancy_odd", verify_sign_constancy("tanh_odd", (1, 3, 5, 7, 9))),
        ("sign_constancy_even", verify_sign_constancy("sech2_even", (0, 2, 4, 6, 8))),
        ("ratio_monotonicity_odd", verify_ratio_monotonicity("tanh_odd", (3, 5, 7, 9))),
        ("ratio_monotonicity_even", verify_ratio_monotonicity("sech2_even", (2, 4, 6, 8))),
    ):
        violations += not check.passed
        report[name] = {
            "violating_degrees": [d for d, _ in check.violations],
            "worst_margin": check.worst_margin,
            "passed": check.passed,
        }

    report["violations"] = violations
    return report
