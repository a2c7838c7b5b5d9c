"""Exact-inference Gaussian process with a squared-exponential kernel.

Outputs are standardized internally; hyperparameters (one lengthscale per
input dimension plus an observation-noise variance) are fit by maximizing
the marginal likelihood with a gradient-free Nelder-Mead polish from 16
deterministic starts on a log grid.  A fixed jitter of 1e-8 keeps the
Cholesky factorization alive.  Fitting and prediction are fully
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

JITTER = 1e-8
N_STARTS = 16
_LS_SCALES = (0.1, 0.3, 1.0, 3.0)
_NOISE_STARTS = (1e-6, 1e-4, 1e-2, 1e-1)


def _sq_dists(X1, X2):
    d = X1[:, None, :] - X2[None, :, :]
    return d * d


def _kernel(sq, lengthscales):
    return np.exp(-0.5 * np.sum(sq / (lengthscales**2), axis=-1))


@dataclass
class GpModel:
    """Fitted GP; predict() returns means and latent standard deviations on
    the original output scale."""

    x: np.ndarray
    y_mean: float
    y_std: float
    lengthscales: np.ndarray
    noise: float
    _chol: object
    _alpha: np.ndarray
    nll: float

    @property
    def constant(self):
        return self.y_std == 0.0

    def predict(self, Xq):
        Xq = np.atleast_2d(np.asarray(Xq, dtype=np.float64))
        if self.constant:
            return (
                np.full(Xq.shape[0], self.y_mean),
                np.zeros(Xq.shape[0]),
            )
        ks = _kernel(_sq_dists(Xq, self.x), self.lengthscales)
        mean = ks @ self._alpha
        v = cho_solve(self._chol, ks.T)
        var = 1.0 - np.einsum("ij,ji->i", ks, v)
        sd = np.sqrt(np.clip(var, 0.0, None))
        return self.y_mean + self.y_std * mean, self.y_std * sd


def _nll(log_params, sq, y):
    lengthscales = np.exp(log_params[:-1])
    noise = np.exp(log_params[-1])
    K = _kernel(sq, lengthscales)
    K[np.diag_indices_from(K)] += noise + JITTER
    try:
        chol = cho_factor(K, lower=True)
    except np.linalg.LinAlgError:
        return 1e25
    alpha = cho_solve(chol, y)
    logdet = 2.0 * np.sum(np.log(np.diag(chol[0])))
    value = 0.5 * float(y @ alpha) + 0.5 * logdet
    return value if np.isfinite(value) else 1e25


def fit_gp(X, y, n_starts=N_STARTS, max_fev=60):
    """Fit lengthscales and noise on (X, y).

    Constant outputs short-circuit to a flat model with zero predictive
    spread.  Starts pair lengthscale scales {0.1, 0.3, 1, 3} (times the
    per-dimension data range) with noise levels {1e-6, 1e-4, 1e-2, 1e-1}.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least two observations")
    y_mean = float(np.mean(y))
    y_sd = float(np.std(y))
    if y_sd < 1e-14 * max(1.0, abs(y_mean)):
        return GpModel(X, y_mean, 0.0, np.ones(d), 0.0, None, np.zeros(n), 0.0)
    ys = (y - y_mean) / y_sd

    ranges = np.maximum(X.max(axis=0) - X.min(axis=0), 1e-12)
    sq = _sq_dists(X, X)

    starts = [
        np.concatenate([np.log(scale * ranges), [np.log(noise)]])
        for scale in _LS_SCALES
        for noise in _NOISE_STARTS
    ][:n_starts]

    best = None
    for p0 in starts:
        res = minimize(
            _nll,
            p0,
            args=(sq, ys),
            method="Nelder-Mead",
            options={"maxfev": max_fev, "xatol": 1e-3, "fatol": 1e-6},
        )
        if best is None or res.fun < best.fun:
            best = res

    lengthscales = np.exp(best.x[:-1])
    noise = float(np.exp(best.x[-1]))
    K = _kernel(sq, lengthscales)
    K[np.diag_indices_from(K)] += noise + JITTER
    chol = cho_factor(K, lower=True)
    alpha = cho_solve(chol, ys)
    return GpModel(X, y_mean, y_sd, lengthscales, noise, chol, alpha, float(best.fun))
