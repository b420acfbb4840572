"""Self-contained regression estimators: ordinary least squares, Newton
logistic regression, and the Lin-Ying additive hazards model with a
Breslow-type baseline cumulative hazard.

Design notes: least-squares solves go through an orthogonal factorization
(SVD via ``lstsq``), never explicit normal-equation inversion; additive-model
survival predictions can exceed [0, 1] at extreme covariates, so they are
clamped and the clamp events counted instead of raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (DidNotConverge, DimensionMismatch, HorizonBeforeZero,
                     InsufficientRows, NoEvents, RankDeficientDesign,
                     SeparationSuspected, SingleClassResponse,
                     SingularInformation)

_RANK_TOL = 1e-10       # smallest/largest singular value below this = rank deficient
_SCORE_TOL = 1e-8       # logistic: max absolute score at convergence
_LOGLIK_TOL = 1e-10     # logistic: relative log-likelihood change at convergence
_MAX_NEWTON_ITER = 100


def expit(eta):
    """Numerically stable logistic function."""
    eta = np.asarray(eta, dtype=float)
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def _check_full_rank(design):
    s = np.linalg.svd(design, compute_uv=False)
    if s.size == 0 or s[-1] <= _RANK_TOL * s[0]:
        raise RankDeficientDesign(
            f"smallest singular value ratio {0.0 if s.size == 0 else s[-1] / s[0]:.3e}")


@dataclass(frozen=True)
class LinearModelFit:
    coefficients: np.ndarray
    residual_sd: float
    design_column_names: tuple

    def predict(self, design):
        return np.asarray(design, dtype=float) @ self.coefficients


def fit_linear(design, response, column_names=None):
    """Least-squares fit; ``residual_sd`` uses the unbiased n - q denominator."""
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    n, q = design.shape
    if n <= q:
        raise InsufficientRows(f"n={n} rows for q={q} columns")
    _check_full_rank(design)
    coef, _, _, _ = np.linalg.lstsq(design, response, rcond=None)
    resid = response - design @ coef
    rss = float(resid @ resid)
    names = tuple(column_names) if column_names else tuple(f"x{j}" for j in range(q))
    return LinearModelFit(coefficients=coef, residual_sd=math.sqrt(rss / (n - q)),
                          design_column_names=names)


@dataclass(frozen=True)
class LogisticModelFit:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    design_column_names: tuple = ()

    def predict_proba(self, design):
        return expit(np.asarray(design, dtype=float) @ self.coefficients)


def fit_logistic(design, response, column_names=None):
    """Maximum-likelihood logistic regression by Newton-Raphson.

    Converges when the max absolute score drops below 1e-8 or the relative
    log-likelihood change below 1e-10, within 100 iterations.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    n, q = design.shape
    if np.all(y == y[0]):
        raise SingleClassResponse(f"response is constant at {y[0]:g}")
    _check_full_rank(design)
    names = tuple(column_names) if column_names else tuple(f"x{j}" for j in range(q))

    beta = np.zeros(q)
    ll_prev = -np.inf
    for it in range(1, _MAX_NEWTON_ITER + 1):
        eta = design @ beta
        p = expit(eta)
        score = design.T @ (y - p)
        ll = float(y @ eta - np.logaddexp(0.0, eta).sum())
        if not np.isfinite(ll):
            raise SeparationSuspected("log-likelihood became non-finite")
        max_score = float(np.max(np.abs(score)))
        if max_score < _SCORE_TOL or abs(ll - ll_prev) <= _LOGLIK_TOL * (abs(ll) + _LOGLIK_TOL):
            if float(np.max(np.abs(eta))) > 30.0:
                raise SeparationSuspected("fitted log-odds diverged before convergence")
            return LogisticModelFit(coefficients=beta, converged=True, iterations=it,
                                    design_column_names=names)
        w = p * (1.0 - p)
        hess = design.T @ (design * w[:, None])
        try:
            step = np.linalg.solve(hess, score)
        except np.linalg.LinAlgError:
            raise SeparationSuspected("singular Hessian during Newton iteration") from None
        beta = beta + step
        if float(np.max(np.abs(beta))) > 1e4:
            raise SeparationSuspected("coefficient norm diverging")
        ll_prev = ll
    raise DidNotConverge(f"no convergence in {_MAX_NEWTON_ITER} Newton iterations")


# ---------------------------------------------------------------------------
# Additive hazards.

@dataclass(frozen=True)
class StepLinearCumhaz:
    """Baseline cumulative hazard: right-continuous jumps at event times plus
    piecewise-linear drift between knots; extended past the last knot with the
    final slope."""

    knots: np.ndarray    # increasing, knots[0] == 0
    values: np.ndarray   # value at each knot, jump at the knot included
    slopes: np.ndarray   # slope on (knots[j], knots[j+1]); slopes[-1] extends

    def __post_init__(self):
        object.__setattr__(self, "knots", np.asarray(self.knots, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "slopes", np.asarray(self.slopes, dtype=float))

    @classmethod
    def linear(cls, rate):
        """Pure-linear baseline ``rate * t`` (synthetic/known-parameter models)."""
        return cls(knots=np.array([0.0]), values=np.array([0.0]),
                   slopes=np.array([float(rate)]))

    def __call__(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t_arr < 0):
            raise HorizonBeforeZero("cumulative hazard is undefined before time 0")
        j = np.clip(np.searchsorted(self.knots, t_arr, side="right") - 1, 0, None)
        out = self.values[j] + self.slopes[j] * (t_arr - self.knots[j])
        return out if np.ndim(t) else float(out[0])

    def to_jsonable(self):
        return {"knots": self.knots.tolist(), "values": self.values.tolist(),
                "slopes": self.slopes.tolist()}


@dataclass(frozen=True)
class AdditiveHazardsFit:
    coefficients: np.ndarray
    baseline_cumhaz: StepLinearCumhaz
    covariate_names: tuple


def _sweep_risk_sets(table, covariates):
    """Running at-risk sums on the elementary time segments of a counting table.

    Returns the design, segment boundaries, and per-segment risk-set count,
    covariate sum, and covariate cross-product sum.
    """
    x, names = table.design(covariates)
    bounds = np.unique(np.concatenate([table.t_start, table.t_stop]))
    n_b = bounds.shape[0]
    q = x.shape[1]
    s_idx = np.searchsorted(bounds, table.t_start)
    e_idx = np.searchsorted(bounds, table.t_stop)

    d_count = np.zeros(n_b)
    np.add.at(d_count, s_idx, 1.0)
    np.add.at(d_count, e_idx, -1.0)
    d_s1 = np.zeros((n_b, q))
    np.add.at(d_s1, s_idx, x)
    np.add.at(d_s1, e_idx, -x)
    xx = x[:, :, None] * x[:, None, :]
    d_s2 = np.zeros((n_b, q, q))
    np.add.at(d_s2, s_idx, xx)
    np.add.at(d_s2, e_idx, -xx)

    # segment j = (bounds[j], bounds[j+1]]
    count = np.rint(np.cumsum(d_count))[:-1]
    s1 = np.cumsum(d_s1, axis=0)[:-1]
    s2 = np.cumsum(d_s2, axis=0)[:-1]
    return x, names, bounds, e_idx, count, s1, s2


def _linying_system(table, covariates=None):
    """Normal matrix and event vector of the Lin-Ying estimating equation."""
    x, names, bounds, e_idx, count, s1, s2 = _sweep_risk_sets(table, covariates)
    dt = np.diff(bounds)
    at_risk = count > 0
    w = dt[at_risk]
    c = count[at_risk]
    s1r = s1[at_risk]
    a_mat = (np.einsum("j,jab->ab", w, s2[at_risk])
             - np.einsum("j,ja,jb->ab", w / c, s1r, s1r))

    ev = table.outcome_event == 1
    j_ev = e_idx[ev] - 1
    xbar_ev = s1[j_ev] / count[j_ev][:, None]
    b_vec = (x[ev] - xbar_ev).sum(axis=0)
    return a_mat, b_vec, names, bounds, e_idx, count, s1


def fit_additive_hazards(table, covariates=None):
    """Lin-Ying additive hazards fit on a counting-process table.

    Coefficients solve the estimating equation evaluated exactly as finite
    sums over event times and piecewise-constant at-risk segments; tied event
    times are processed as a single jump.  The baseline cumulative hazard is
    the Breslow-type estimate stored as a step-plus-linear function.
    """
    if not np.any(table.outcome_event == 1):
        raise NoEvents("counting-process table contains no outcome events")
    a_mat, b_vec, names, bounds, e_idx, count, s1 = _linying_system(table, covariates)

    sv = np.linalg.svd(a_mat, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise SingularInformation("Lin-Ying normal matrix is numerically singular")
    beta = np.linalg.solve(a_mat, b_vec)

    # Baseline: jump dN(s)/R(s) at each event time s, drift -beta' xbar between.
    n_seg = count.shape[0]
    ev = table.outcome_event == 1
    j_ev = e_idx[ev] - 1
    jump_per_seg = np.zeros(n_seg)
    np.add.at(jump_per_seg, j_ev, 1.0)
    jump_per_seg[jump_per_seg > 0] /= count[jump_per_seg > 0]

    with np.errstate(invalid="ignore", divide="ignore"):
        xbar = np.where(count[:, None] > 0, s1 / np.where(count[:, None] > 0, count[:, None], 1.0), 0.0)
    seg_drift = -(xbar @ beta)
    # carry the last at-risk drift into empty trailing segments and beyond
    last_risk = int(np.max(np.nonzero(count > 0)[0]))
    seg_drift[last_risk + 1:] = seg_drift[last_risk]

    dt = np.diff(bounds)
    # value at knot j+1 = value at j + drift_j * dt_j + jump at knot j+1
    increments = seg_drift * dt + jump_per_seg
    values = np.concatenate([[0.0], np.cumsum(increments)])
    slopes = np.concatenate([seg_drift, [seg_drift[-1]]])
    knots = bounds
    if knots[0] > 0.0:  # nobody at risk before the first row starts
        knots = np.concatenate([[0.0], knots])
        values = np.concatenate([[0.0], values])
        slopes = np.concatenate([[0.0], slopes])
    baseline = StepLinearCumhaz(knots=knots, values=values, slopes=slopes)
    return AdditiveHazardsFit(coefficients=beta, baseline_cumhaz=baseline,
                              covariate_names=names)


class ClampCounter:
    """Mutable tally of survival predictions clamped into [0, 1]."""

    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def add(self, n):
        self.count += int(n)


@dataclass(frozen=True)
class PiecewisePath:
    """Piecewise-constant covariate path: ``values[j]`` applies on
    ``(boundaries[j-1], boundaries[j]]`` with ``boundaries[-1]`` extended."""

    boundaries: np.ndarray   # increasing, first segment starts at 0
    values: np.ndarray       # (r, q)

    def __post_init__(self):
        object.__setattr__(self, "boundaries", np.asarray(self.boundaries, dtype=float))
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, x):
        return cls(boundaries=np.array([np.inf]), values=np.asarray(x, dtype=float)[None, :])

    def integral(self, upto):
        """Exact componentwise integral of the path over (0, upto]."""
        edges = np.concatenate([[0.0], self.boundaries])
        seg_len = np.clip(np.minimum(edges[1:], upto) - edges[:-1], 0.0, None)
        total = seg_len @ self.values
        if upto > self.boundaries[-1]:
            total += (upto - self.boundaries[-1]) * self.values[-1]
        return total


def predict_survival(fit, covariate_path, horizon, clamp_counter=None):
    """Model survival probability at ``horizon`` for a covariate path.

    Returns ``exp(-(baseline(horizon) + beta' integral(path)))`` clamped to
    [0, 1]; clamping is tallied on ``clamp_counter`` when provided.
    """
    if horizon < 0:
        raise HorizonBeforeZero(f"horizon {horizon} < 0")
    if horizon == 0:
        return 1.0
    ix = covariate_path.integral(horizon)
    if ix.shape[0] != fit.coefficients.shape[0]:
        raise DimensionMismatch(
            f"path has {ix.shape[0]} covariates, model expects {fit.coefficients.shape[0]}")
    total = fit.baseline_cumhaz(horizon) + float(fit.coefficients @ ix)
    prob = math.exp(-total)
    if prob > 1.0 or prob < 0.0:
        if clamp_counter is not None:
            clamp_counter.add(1)
        prob = min(1.0, max(0.0, prob))
    return prob


def predict_hazard_rate(fit, covariate_vector):
    """Covariate-attributable additive rate ``beta' x`` (baseline excluded)."""
    x = np.asarray(covariate_vector, dtype=float)
    if x.shape != fit.coefficients.shape:
        raise DimensionMismatch(f"x has shape {x.shape}, model expects {fit.coefficients.shape}")
    return float(fit.coefficients @ x)


def serialize_linear(fit):
    return {"coefficients": fit.coefficients.tolist(),
            "residual_sd": fit.residual_sd,
            "columns": list(fit.design_column_names)}


def serialize_logistic(fit):
    return {"coefficients": fit.coefficients.tolist(),
            "converged": fit.converged, "iterations": fit.iterations,
            "columns": list(fit.design_column_names)}


def serialize_additive_hazards(fit):
    return {"coefficients": fit.coefficients.tolist(),
            "covariates": list(fit.covariate_names),
            "baseline_cumhaz": fit.baseline_cumhaz.to_jsonable()}
