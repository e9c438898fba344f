"""Tangent-kernel construction for graph filters and two-layer GNNs.

Four routes to the stacked nM x nM kernel:

* empirical: Jacobian product of a concrete finite-width model;
* analytic graph filter: sum_k S~^k x~ x~^T S~^k, parameter-free;
* infinite-width GNN: conjugated expectation matrix E (or the first-layer
  E1), with E computed by pair quadrature or a truncated odd-degree
  Hermite series;
* Monte Carlo: finite number of random hidden features, for width studies.

Everything here materializes dense matrices; intended for nM up to a few
thousand.  Row ell of the Z matrix is the per-entry vector
[x~_ell, (S~ x~)_ell, ...], so Z Z^T is the linear kernel B_lin and row
norms feed the Hermite coefficient tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Dataset,
    DivergenceError,
    NtkKind,
    NtkMatrix,
    ShiftOperator,
    _frozen_array,
    stack,
)
from .hermite import gauss_hermite_rule, hermite_eval_upto
from .models import (
    FilterParams,
    InitConfig,
    TwoLayerGnnParams,
    filter_jacobian,
    flatten_params,
    get_activation,
    gnn2_forward,
    gnn2_jacobian,
    init_gnn2,
    unflatten_params,
)

DEFAULT_QUADRATURE_POINTS = 64
SERIES_DEFAULT_DEGREE = 21
SERIES_QUADRATURE_POINTS = 512
RHO_OVERSHOOT_TOL = 1e-9
SERIES_WARNING_FACTOR = 1e-4
DIVERGENCE_FACTOR = 1e6


def _signals(data) -> np.ndarray:
    x = data.x if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"expected (nodes, samples) signals, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class ZVectors:
    """Per-entry shift profiles: row ell is [x~_ell, (S~ x~)_ell, ...]."""

    matrix: np.ndarray
    num_nodes: int
    num_samples: int

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen_array(self.matrix, ndim=2))
        if self.matrix.shape[0] != self.num_nodes * self.num_samples:
            raise ValueError("row count must be num_nodes * num_samples")

    @property
    def num_taps(self) -> int:
        return self.matrix.shape[1]

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.matrix, axis=1)

    def gram(self) -> np.ndarray:
        return self.matrix @ self.matrix.T


def z_vectors(s: ShiftOperator, data, num_taps: int) -> ZVectors:
    x = _signals(data)
    powers = s.powers_applied(x, num_taps)  # (K, n, M)
    z = powers.transpose(2, 1, 0).reshape(-1, num_taps)
    return ZVectors(z, num_nodes=x.shape[0], num_samples=x.shape[1])


def b_lin(s: ShiftOperator, data, num_taps: int) -> np.ndarray:
    """Linear kernel sum_k S~^k x~ x~^T S~^k as a plain matrix."""
    z = z_vectors(s, data, num_taps).matrix
    return z @ z.T


def filter_ntk(s: ShiftOperator, data, num_taps: int) -> NtkMatrix:
    """Analytic graph-filter NTK; independent of the taps, rank at most K."""
    return NtkMatrix(
        b_lin(s, data, num_taps),
        NtkKind.FILTER_ANALYTIC,
        info={"num_taps": num_taps},
    )


def empirical_ntk(s: ShiftOperator, params, data, which_layer: str = "both") -> NtkMatrix:
    """Jacobian-product NTK of a concrete model at the given parameters."""
    x = _signals(data)
    if isinstance(params, FilterParams):
        jac = filter_jacobian(s, x, params.num_taps)
        info = {"model": "filter", "num_taps": params.num_taps}
    elif isinstance(params, TwoLayerGnnParams):
        jac = gnn2_jacobian(s, params, x, which_layer)
        info = {
            "model": "gnn2",
            "width": params.width,
            "num_taps": params.num_taps,
            "which_layer": which_layer,
        }
    else:
        raise TypeError(f"no Jacobian route for {type(params).__name__}")
    return NtkMatrix(jac @ jac.T, NtkKind.EMPIRICAL, info=info)


@dataclass(frozen=True)
class ExpectationMatrix:
    """Hidden-feature second-moment matrix E (or its first-layer analog).

    ``zero_rows`` lists stacked indices whose shift profile vanishes; their
    rows and columns are defined as 0.  For the series method the (B,
    delta_b) split is kept and ``truncation_residual`` bounds the entrywise
    error against the untruncated series.
    """

    matrix: np.ndarray
    method: str
    zero_rows: tuple = ()
    b: np.ndarray | None = None
    delta_b: np.ndarray | None = None
    truncation_residual: float | None = None
    truncation_warning: bool = False
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen_array(self.matrix, ndim=2))


def _correlations(z: ZVectors):
    """Row norms, clamped correlation matrix, and zero-norm row indices."""
    norms = z.norms
    zero_rows = np.flatnonzero(norms == 0.0)
    safe = np.where(norms == 0.0, 1.0, norms)
    rho = z.gram() / np.outer(safe, safe)
    overshoot = np.abs(rho).max(initial=0.0) - 1.0
    if overshoot > RHO_OVERSHOOT_TOL:
        raise RuntimeError(f"correlation overshoot {overshoot:.3e} exceeds round-off budget")
    rho = np.clip(rho, -1.0, 1.0)
    rho[zero_rows, :] = 0.0
    rho[:, zero_rows] = 0.0
    np.fill_diagonal(rho, 1.0)
    rho[zero_rows, zero_rows] = 0.0
    return norms, rho, tuple(int(i) for i in zero_rows)


def _pair_quadrature(fn, norms, rho, n_points, chunk=512) -> np.ndarray:
    """E[fn(|z_a| u) fn(|z_b| u')] over rho-correlated pairs, upper triangle."""
    nm = norms.shape[0]
    nodes, weights = gauss_hermite_rule(n_points)
    w2 = np.outer(weights, weights)
    u = nodes[None, :, None]
    v = nodes[None, None, :]
    ii, jj = np.triu_indices(nm)
    out = np.zeros((nm, nm))
    for start in range(0, ii.size, chunk):
        a = ii[start : start + chunk]
        b = jj[start : start + chunk]
        r = rho[a, b][:, None, None]
        uprime = r * u + np.sqrt(1.0 - r * r) * v
        vals = fn(norms[a][:, None, None] * u) * fn(norms[b][:, None, None] * uprime)
        e = (vals * w2[None]).sum(axis=(1, 2))
        out[a, b] = e
        out[b, a] = e
    return out


def _zero_out(matrix: np.ndarray, zero_rows) -> np.ndarray:
    if zero_rows:
        idx = list(zero_rows)
        matrix[idx, :] = 0.0
        matrix[:, idx] = 0.0
    return matrix


def _analytic_activation(name: str):
    act = get_activation(name)
    if not act.analytic_ntk:
        raise ValueError(f"no infinite-width path for activation {name!r}")
    return act


def expectation_E_quadrature(
    z: ZVectors, activation: str = "tanh", n_points: int = DEFAULT_QUADRATURE_POINTS
) -> ExpectationMatrix:
    """E_ab = E[sigma(|z_a| u) sigma(|z_b| u')] by tensor Gauss-Hermite.

    u' = rho_ab u + sqrt(1 - rho_ab^2) v reduces each pair to a 2D rule.
    Correlations are clamped to [-1, 1]; an overshoot beyond round-off
    scale raises instead of being hidden.
    """
    act = _analytic_activation(activation)
    norms, rho, zero_rows = _correlations(z)
    e = _pair_quadrature(act.fn, norms, rho, n_points)
    e = _zero_out(e, zero_rows)
    return ExpectationMatrix(
        e, "quadrature", zero_rows=zero_rows, info={"n_points": n_points, "activation": activation}
    )


def expectation_E_series(
    z: ZVectors,
    max_degree: int = SERIES_DEFAULT_DEGREE,
    activation: str = "tanh",
    n_points: int = SERIES_QUADRATURE_POINTS,
) -> ExpectationMatrix:
    """E = B + delta_B from the odd-degree Hermite expansion of tanh.

    B keeps the degree-1 term; delta_B sums degrees 3, 5, ..., max_degree.
    The residual bound is Cauchy-Schwarz over the dropped degrees, with the
    per-row tail computed against the same quadrature rule as the
    coefficients so it stays nonnegative.  Identity activation has only the
    degree-1 term, so E reduces to the linear kernel exactly.
    """
    if max_degree < 3 or max_degree % 2 == 0:
        raise ValueError("max_degree must be odd and >= 3")
    _analytic_activation(activation)
    norms, rho, zero_rows = _correlations(z)
    if activation == "identity":
        b = z.gram()
        delta = np.zeros_like(b)
        residual = 0.0
    else:
        nodes, weights = gauss_hermite_rule(n_points)
        vals = np.tanh(np.multiply.outer(norms, nodes))  # (nM, q)
        p = hermite_eval_upto(max_degree, nodes)  # (L+1, q)
        coeffs = vals @ (weights[:, None] * p.T)  # (nM, L+1)
        totals = (vals * vals) @ weights
        tails = np.maximum(totals - (coeffs * coeffs).sum(axis=1), 0.0)
        b = np.outer(coeffs[:, 1], coeffs[:, 1]) * rho
        delta = np.zeros_like(b)
        rho_power = rho * rho * rho
        for degree in range(3, max_degree + 1, 2):
            delta += np.outer(coeffs[:, degree], coeffs[:, degree]) * rho_power
            rho_power = rho_power * rho * rho
        # Cauchy-Schwarz over dropped degrees: sqrt(tail_a tail_b) <= max tail
        residual = float(tails.max(initial=0.0))
    b = _zero_out((b + b.T) / 2.0, zero_rows)
    delta = _zero_out((delta + delta.T) / 2.0, zero_rows)
    e = b + delta
    warning = residual > SERIES_WARNING_FACTOR * max(np.abs(e).max(initial=0.0), 1e-300)
    return ExpectationMatrix(
        e,
        "series",
        zero_rows=zero_rows,
        b=b,
        delta_b=delta,
        truncation_residual=residual,
        truncation_warning=bool(warning),
        info={"max_degree": max_degree, "n_points": n_points, "activation": activation},
    )


def expectation_E_first_layer(
    z: ZVectors, activation: str = "tanh", n_points: int = DEFAULT_QUADRATURE_POINTS
) -> ExpectationMatrix:
    """First-layer analog: E[sigma'(|z_a| u) sigma'(|z_b| u')] <z_a, z_b>.

    The derivative pair expectation multiplies the Gram matrix entrywise;
    identity activation makes the derivative factor 1 and recovers the
    linear kernel.
    """
    act = _analytic_activation(activation)
    norms, rho, zero_rows = _correlations(z)
    pair = _pair_quadrature(act.deriv, norms, rho, n_points)
    e1 = _zero_out(pair * z.gram(), zero_rows)
    return ExpectationMatrix(
        e1,
        "first_layer_quadrature",
        zero_rows=zero_rows,
        info={"n_points": n_points, "activation": activation},
    )


def conjugated_power_sum(
    s: ShiftOperator, matrix: np.ndarray, num_taps: int, num_samples: int
) -> np.ndarray:
    """sum_k S~^k A S~^k without materializing the block-diagonal lift."""
    matrix = np.asarray(matrix, dtype=float)
    n = s.num_nodes
    if matrix.shape != (n * num_samples, n * num_samples):
        raise ValueError(f"matrix shape {matrix.shape} does not match lift size")
    # apply S to the row blocks then the column blocks, once per power
    blk = matrix.reshape(num_samples, n, num_samples, n)
    acc = matrix.copy()
    for _ in range(1, num_taps):
        blk = np.einsum("ab,ibjc->iajc", s.matrix, blk)
        blk = np.einsum("ibjd,dc->ibjc", blk, s.matrix)
        acc += blk.reshape(matrix.shape)
    return acc


_INFINITE_KINDS = {
    "quadrature": NtkKind.GNN_INFINITE_QUADRATURE,
    "series": NtkKind.GNN_INFINITE_SERIES,
}


def gnn_infinite_ntk(
    s: ShiftOperator,
    data,
    num_taps: int,
    layer: str = "second",
    method: str = "quadrature",
    activation: str = "tanh",
    n_points: int = DEFAULT_QUADRATURE_POINTS,
    max_degree: int = SERIES_DEFAULT_DEGREE,
) -> NtkMatrix:
    """Infinite-width GNN NTK contribution of one layer: sum_k S~^k E S~^k.

    ``layer='second'`` uses the activation second-moment matrix E;
    ``layer='first'`` uses the derivative-weighted Gram E1.  The first-layer
    path is quadrature-only.
    """
    x = _signals(data)
    z = z_vectors(s, x, num_taps)
    if layer == "second":
        if method == "quadrature":
            e = expectation_E_quadrature(z, activation, n_points)
        elif method == "series":
            e = expectation_E_series(z, max_degree, activation)
        else:
            raise ValueError(f"unknown method {method!r}")
        kind = _INFINITE_KINDS[method]
    elif layer == "first":
        if method != "quadrature":
            raise ValueError("first-layer expectation is quadrature-only")
        e = expectation_E_first_layer(z, activation, n_points)
        kind = NtkKind.GNN_INFINITE_QUADRATURE
    else:
        raise ValueError(f"layer must be 'first' or 'second', got {layer!r}")
    theta = conjugated_power_sum(s, e.matrix, num_taps, x.shape[1])
    info = {"layer": layer, "method": e.method, "num_taps": num_taps, **e.info}
    if e.truncation_residual is not None:
        info["truncation_residual"] = e.truncation_residual
        info["truncation_warning"] = e.truncation_warning
    if e.zero_rows:
        info["zero_rows"] = e.zero_rows
    return NtkMatrix(theta, kind, info=info)


def _stacked_powers(
    s: ShiftOperator, w: np.ndarray, num_nodes: int, num_samples: int, num_taps: int
) -> np.ndarray:
    """[w, S~ w, ..., S~^{K-1} w] for sample-major stacked columns w."""
    cols = w.shape[1]
    per_node = (
        w.reshape(num_samples, num_nodes, cols).transpose(1, 0, 2).reshape(num_nodes, -1)
    )
    powers = s.powers_applied(per_node, num_taps)
    return (
        powers.reshape(num_taps, num_nodes, num_samples, cols)
        .transpose(0, 2, 1, 3)
        .reshape(num_taps, num_samples * num_nodes, cols)
    )


def gnn_monte_carlo_ntk(
    s: ShiftOperator,
    data,
    num_taps: int,
    num_features: int,
    seed: int,
    which_layer: str = "second",
    activation: str = "tanh",
    draws: tuple | None = None,
) -> NtkMatrix:
    """Finite random-feature estimate of the infinite-width NTK layer terms.

    Second layer averages (S~^k sigma(Z g_f)) outer products over hidden
    filters g_f ~ N(0, I_K); the first layer additionally draws fresh
    readout taps h_f for the polynomial factor in front of the derivative.
    ``draws=(g, h)`` overrides the random draws (shapes (F, K)), which pins
    down degenerate cases in tests.
    """
    if num_features < 1:
        raise ValueError("num_features must be >= 1")
    act = get_activation(activation)
    x = _signals(data)
    n, num_samples = x.shape
    z = z_vectors(s, x, num_taps).matrix
    if draws is None:
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((num_features, num_taps))
        h = rng.standard_normal((num_features, num_taps))
    else:
        g, h = (np.asarray(d, dtype=float) for d in draws)
        if g.shape != (num_features, num_taps) or h.shape != (num_features, num_taps):
            raise ValueError("draws must have shape (num_features, num_taps)")

    pre = z @ g.T  # (nM, F)
    if which_layer == "second":
        feats = act.fn(pre)
        e_hat = (feats @ feats.T) / num_features
        theta = conjugated_power_sum(s, e_hat, num_taps, num_samples)
    elif which_layer == "first":
        d_vals = act.deriv(pre)  # (nM, F)
        theta = np.zeros((n * num_samples, n * num_samples))
        for f in range(num_features):
            w = d_vals[:, f : f + 1] * z  # (nM, K)
            powers = _stacked_powers(s, w, n, num_samples, num_taps)
            c = np.einsum("j,jak->ak", h[f], powers)  # (nM, K)
            theta += c @ c.T
        theta /= num_features
    else:
        raise ValueError(f"which_layer must be 'first' or 'second', got {which_layer!r}")
    return NtkMatrix(
        theta,
        NtkKind.GNN_MONTE_CARLO,
        info={
            "layer": which_layer,
            "num_features": num_features,
            "seed": seed,
            "num_taps": num_taps,
            "activation": activation,
        },
    )


@dataclass(frozen=True)
class DriftPoint:
    width: int
    drift: float


def ntk_drift(
    s: ShiftOperator,
    data: Dataset,
    num_taps: int,
    widths,
    eta: float,
    num_steps: int,
    seed: int,
    activation: str = "tanh",
    kappa: float = 1.0,
    model: str = "gnn2",
) -> tuple[DriftPoint, ...]:
    """Largest relative NTK movement during a short gradient-descent run.

    For each width F, trains on the squared loss for num_steps and reports
    max_t ||Theta_t - Theta_0||_F / ||Theta_0||_F.  A graph filter has a
    parameter-free NTK, so its drift is exactly zero; wider GNNs should
    drift less.  Raises DivergenceError when the loss blows up.
    """
    if model not in ("gnn2", "filter"):
        raise ValueError(f"model must be 'gnn2' or 'filter', got {model!r}")
    y_stacked = stack(data.y)
    out = []
    for width in widths:
        if model == "filter":
            params = FilterParams(
                np.random.default_rng(seed).normal(0.0, kappa, size=num_taps)
            )
            forward = lambda p: (filter_jacobian(s, data.x, num_taps) @ p.taps).reshape(
                data.num_samples, data.num_nodes
            ).T
        else:
            params = init_gnn2(int(width), num_taps, InitConfig(kappa=kappa, seed=seed), activation)
            forward = lambda p: gnn2_forward(s, p, data.x)
        theta0 = empirical_ntk(s, params, data.x).matrix
        norm0 = np.linalg.norm(theta0)
        drift = 0.0
        initial_loss = None
        for step in range(num_steps):
            jac = (
                filter_jacobian(s, data.x, num_taps)
                if model == "filter"
                else gnn2_jacobian(s, params, data.x)
            )
            resid = stack(forward(params)) - y_stacked
            loss = 0.5 * float(resid @ resid)
            if initial_loss is None:
                initial_loss = max(loss, 1e-300)
            if not math.isfinite(loss) or loss > DIVERGENCE_FACTOR * initial_loss:
                raise DivergenceError(step, loss)
            flat = flatten_params(params) - eta * (jac.T @ resid)
            params = unflatten_params(flat, params)
            theta_t = empirical_ntk(s, params, data.x).matrix
            drift = max(drift, float(np.linalg.norm(theta_t - theta0) / norm0))
        out.append(DriftPoint(width=int(width), drift=drift))
    return tuple(out)
