"""Inverse problems: g2 noise model, exponential lifetimes, noise vs pumping."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.optimize import least_squares

from .photon_stats import G2Model, StatPoint

Z95 = stats.norm.ppf(0.975)


class FitError(RuntimeError):
    """Optimiser failed to converge."""


class RankDeficiencyError(ValueError):
    """Data cannot identify the free parameters."""


@dataclass
class FitResult:
    params: dict
    covariance: np.ndarray
    ci95: dict
    residual_norm: float
    n_points: int
    converged: bool
    flags: list = field(default_factory=list)
    param_names: tuple = ()
    iterations: int = 0
    extra: dict = field(default_factory=dict)

    def stderr(self, name):
        i = self.param_names.index(name)
        return float(np.sqrt(self.covariance[i, i]))

    def to_dict(self):
        return {
            "params": dict(self.params),
            "param_names": list(self.param_names),
            "covariance": np.asarray(self.covariance).tolist(),
            "ci95": {k: list(v) for k, v in self.ci95.items()},
            "residual_norm": self.residual_norm,
            "n_points": self.n_points,
            "converged": self.converged,
            "iterations": self.iterations,
            "flags": list(self.flags),
            **({"extra": self.extra} if self.extra else {}),
        }


def _covariance(J, cost, n, p, absolute_sigma):
    """Linearised covariance; rescaled by the reduced chi^2 unless sigma is absolute."""
    JTJ = J.T @ J
    try:
        cov = np.linalg.inv(JTJ)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(JTJ)
    if not absolute_sigma:
        dof = n - p
        cov = cov * (2.0 * cost / dof) if dof > 0 else np.full_like(cov, np.nan)
    return 0.5 * (cov + cov.T)


def _quantile(n, p, absolute_sigma):
    if absolute_sigma:
        return Z95
    dof = n - p
    return stats.t.ppf(0.975, dof) if dof > 0 else np.nan


# ---------------------------------------------------------------------------
# g2 model

G2_NAMES = ("a", "N_SRS", "N_F")
G2_LOWER = {"a": -1.0, "N_SRS": 0.0, "N_F": 0.0}


def _g2_and_jac(p, N, g2F):
    a, S, F = p
    D = N + S + F
    num = a * N * N + 2.0 * S * N + S * S + F * F * (g2F - 1.0)
    D2 = D * D
    f = 1.0 + num / D2
    d3 = 2.0 * num / (D2 * D)
    J = np.empty((N.size, 3))
    J[:, 0] = N * N / D2
    J[:, 1] = (2.0 * N + 2.0 * S) / D2 - d3
    J[:, 2] = 2.0 * F * (g2F - 1.0) / D2 - d3
    return f, J


def poisson_g2_err(g2, coincidences):
    """Standard error of a g2 estimate dominated by Poisson coincidence counts."""
    c = np.asarray(coincidences, dtype=float)
    return np.asarray(g2, dtype=float) / np.sqrt(np.maximum(c, 1.0))


def _g2_single(N, g2, sig, free, fixed_vals, g2F, x0, tol):
    idx = [G2_NAMES.index(n) for n in free]

    def full(x):
        p = np.array([fixed_vals.get(n, 0.0) for n in G2_NAMES], dtype=float)
        p[idx] = x
        return p

    def fun(x):
        f, _ = _g2_and_jac(full(x), N, g2F)
        return (f - g2) / sig

    def jac(x):
        _, J = _g2_and_jac(full(x), N, g2F)
        return J[:, idx] / sig[:, None]

    lb = [G2_LOWER[n] for n in free]
    x0 = np.clip(np.asarray(x0, float), np.array(lb) + 1e-12, None)
    return least_squares(fun, x0, jac=jac, bounds=(lb, np.inf), method="trf",
                         x_scale="jac", ftol=tol, xtol=tol, gtol=tol, max_nfev=2000), full


def _g2_starts(N, g2, free, x0):
    if x0 is not None:
        return [np.asarray(x0, float)]
    scale = float(np.median(N[N > 0])) if np.any(N > 0) else 1.0
    hi = N >= np.quantile(N, 0.75)
    a0 = float(np.clip(np.mean(g2[hi]) - 1.0, -0.9, 5.0))
    starts = []
    for s in (0.03, 0.1, 0.3, 1.0):
        for r in (0.1, 0.5, 1.0):
            guess = {"a": a0, "N_SRS": s * scale, "N_F": r * s * scale}
            starts.append(np.array([guess[n] for n in free]))
    return starts


def fit_g2_model(points, fixed=None, *, g2_F=2.0, x0=None, bootstrap=False,
                 n_boot=1000, seed=0, workers=None, tol=1e-14) -> FitResult:
    """Weighted least-squares fit of the g2 noise model.

    ``fixed`` pins any of ``a``, ``N_SRS``, ``N_F``.  Points without a finite
    ``g2_err`` are fitted unweighted and the covariance is rescaled by the
    residual variance.  ``bootstrap=True`` adds percentile intervals from
    ``n_boot`` resamples in ``extra["ci95_bootstrap"]``.
    """
    pts = [p if isinstance(p, StatPoint) else StatPoint(*p) for p in points]
    fixed = dict(fixed or {})
    for k in fixed:
        if k not in G2_NAMES:
            raise ValueError(f"unknown parameter {k!r}")
    free = tuple(n for n in G2_NAMES if n not in fixed)
    N = np.array([p.N_out for p in pts], float)
    g2 = np.array([p.g2 for p in pts], float)
    err = np.array([p.g2_err for p in pts], float)
    flags = []
    absolute = bool(np.all(np.isfinite(err)) and np.all(err > 0))
    sig = err if absolute else np.ones_like(g2)
    if not absolute:
        flags.append("unweighted: g2_err missing or nonpositive")

    n, p = len(pts), len(free)
    if n < p or np.unique(N).size < p:
        raise RankDeficiencyError(
            f"{n} points at {np.unique(N).size} distinct N_out cannot identify {p} parameters")
    if n < 4:
        flags.append("fewer than 4 points")
    if not np.any(N <= 1e-3 * max(N.max(), 1e-300)):
        flags.append("no point near N_out = 0")

    best = None
    for start in _g2_starts(N, g2, free, x0):
        res, full = _g2_single(N, g2, sig, free, fixed, g2_F, start, tol)
        if best is None or res.cost < best[0].cost:
            best = (res, full)
    res, full = best
    if res.status <= 0:
        raise FitError(f"g2 fit did not converge: {res.message}")
    J = res.jac
    if np.linalg.matrix_rank(J) < p:
        raise RankDeficiencyError("Jacobian is rank deficient at the solution")

    cov = _covariance(J, res.cost, n, p, absolute)
    q = _quantile(n, p, absolute)
    pfull = full(res.x)
    params = {nm: float(v) for nm, v in zip(G2_NAMES, pfull)}
    ci = {}
    for k, nm in enumerate(free):
        half = q * math.sqrt(max(cov[k, k], 0.0))
        ci[nm] = (params[nm] - half, params[nm] + half)
    for nm in fixed:
        ci[nm] = (params[nm], params[nm])
    for nm in free:
        if nm != "a" and params[nm] <= G2_LOWER[nm] + 1e-12:
            flags.append(f"{nm} at lower bound")
    out = FitResult(params=params, covariance=cov, ci95=ci,
                    residual_norm=float(np.linalg.norm(res.fun)), n_points=n,
                    converged=True, flags=flags, param_names=free,
                    iterations=int(res.njev or res.nfev),
                    extra={"fixed": fixed, "g2_F": g2_F, "absolute_sigma": absolute})
    if bootstrap:
        out.extra["ci95_bootstrap"] = _bootstrap(pts, fixed, g2_F, res.x, n_boot, seed, workers, free)
    return out


def _bootstrap(pts, fixed, g2_F, x_hat, n_boot, seed, workers, free):
    children = np.random.SeedSequence(seed).spawn(n_boot)
    n = len(pts)

    def one(ss):
        rng = np.random.default_rng(ss)
        sample = [pts[i] for i in rng.integers(0, n, n)]
        try:
            r = fit_g2_model(sample, fixed, g2_F=g2_F, x0=x_hat, tol=1e-10)
        except (RankDeficiencyError, FitError):
            return None
        return [r.params[nm] for nm in free]

    workers = workers or int(os.environ.get("RMS_WORKERS", "0") or 0) or (os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        draws = [d for d in pool.map(one, children) if d is not None]
    draws = np.array(draws)
    if draws.size == 0:
        return {}
    lo, hi = np.percentile(draws, [2.5, 97.5], axis=0)
    return {nm: [float(l), float(h)] for nm, l, h in zip(free, lo, hi)} | {"n_ok": int(len(draws))}


def g2_model_from_fit(fit: FitResult, g2_F=None) -> G2Model:
    p = fit.params
    return G2Model(a=p["a"], N_SRS=p["N_SRS"], N_F=p["N_F"],
                   g2_F=fit.extra.get("g2_F", 2.0) if g2_F is None else g2_F)


# ---------------------------------------------------------------------------
# exponential decay

def fit_exponential(t, values, sigma=None, *, tol=1e-14) -> FitResult:
    """Fit ``A exp(-t / tau)``; the decay is solved for as a rate ``k = 1/tau``.

    Reports ``amplitude``, ``rate`` and ``tau`` in the units of ``t``.  A
    rate consistent with zero (constant data) returns ``tau = inf`` and a
    non-identifiable flag; a negative rate is flagged, not clamped.
    """
    t = np.asarray(t, float)
    y = np.asarray(values, float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("t and values must be 1-D arrays of equal length")
    if t.size < 2:
        raise RankDeficiencyError("need at least two points")
    if np.any(np.diff(t) <= 0):
        raise ValueError("t must be strictly increasing")
    absolute = sigma is not None
    sig = np.ones_like(y) if sigma is None else np.broadcast_to(np.asarray(sigma, float), y.shape)
    flags = []
    if t.size < 3:
        flags.append("two points: interpolating fit, no error estimate")

    pos = y > 0
    if pos.sum() >= 2:
        k0, lnA0 = np.polyfit(t[pos], np.log(y[pos]), 1)
        x0 = np.array([math.exp(lnA0), -k0])
    else:
        x0 = np.array([float(np.mean(y)) or 1.0, 0.0])
    tscale = max(abs(t[-1]), abs(t[0]), 1e-300)

    def fun(x):
        return (x[0] * np.exp(-x[1] * t) - y) / sig

    def jac(x):
        e = np.exp(-x[1] * t)
        return np.column_stack([e, -x[0] * t * e]) / sig[:, None]

    res = least_squares(fun, x0, jac=jac, method="trf", x_scale="jac",
                        ftol=tol, xtol=tol, gtol=tol, max_nfev=5000)
    if res.status <= 0:
        raise FitError(res.message)
    A, k = res.x
    n = t.size
    cov = _covariance(res.jac, res.cost, n, 2, absolute)
    q = _quantile(n, 2, absolute)
    sk = math.sqrt(cov[1, 1]) if np.isfinite(cov[1, 1]) else float("nan")
    sA = math.sqrt(cov[0, 0]) if np.isfinite(cov[0, 0]) else float("nan")
    k_lo, k_hi = k - q * sk, k + q * sk

    if abs(k) * tscale < 1e-9:
        tau = math.inf
        flags.append("tau non-identifiable: decay rate consistent with zero")
    else:
        tau = 1.0 / k
        if k < 0:
            flags.append("nonpositive tau")
        elif k_lo <= 0:
            flags.append("tau non-identifiable: rate interval includes zero")
    # interval for tau from the rate interval (monotone map)
    if np.isfinite(k_lo) and np.isfinite(k_hi) and k_lo > 0:
        tau_ci = (1.0 / k_hi, 1.0 / k_lo)
    elif np.isfinite(k_hi) and k_hi > 0:
        tau_ci = (1.0 / k_hi, math.inf)
    else:
        tau_ci = (float("nan"), float("nan"))
    ci = {"amplitude": (A - q * sA, A + q * sA), "rate": (k_lo, k_hi), "tau": tau_ci}
    return FitResult(params={"amplitude": float(A), "rate": float(k), "tau": float(tau)},
                     covariance=cov, ci95=ci, residual_norm=float(np.linalg.norm(res.fun)),
                     n_points=n, converged=True, flags=flags,
                     param_names=("amplitude", "rate"), iterations=int(res.njev or res.nfev))


# ---------------------------------------------------------------------------
# noise vs residual population

def fit_linear_noise_vs_alpha(alpha, N_noise) -> FitResult:
    """Ordinary least squares ``N_noise = slope * alpha + offset``.

    The offset is the fluorescence floor left at perfect pumping.  A
    negative offset is flagged and kept as fitted.
    """
    x = np.asarray(alpha, float)
    y = np.asarray(N_noise, float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("alpha and N_noise must be 1-D arrays of equal length")
    if np.unique(x).size < 2:
        raise RankDeficiencyError("need at least two distinct alpha values")
    X = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    n = x.size
    dof = n - 2
    flags = []
    XtX_inv = np.linalg.inv(X.T @ X)
    if dof > 0:
        s2 = float(resid @ resid) / dof
        cov = s2 * XtX_inv
        q = stats.t.ppf(0.975, dof)
    else:
        cov = np.full((2, 2), np.nan)
        q = np.nan
        flags.append("no residual degrees of freedom: exact line, no error estimate")
    slope, offset = (float(c) for c in coef)
    if offset < 0:
        flags.append("negative offset")
    ci = {}
    for i, nm in enumerate(("slope", "offset")):
        v = float(coef[i])
        if dof > 0:
            half = q * math.sqrt(max(cov[i, i], 0.0))
            ci[nm] = (v - half, v + half)
        else:
            ci[nm] = (v, v)
    return FitResult(params={"slope": slope, "offset": offset}, covariance=cov, ci95=ci,
                     residual_norm=float(np.linalg.norm(resid)), n_points=n, converged=True,
                     flags=flags, param_names=("slope", "offset"), iterations=1)
