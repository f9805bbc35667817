"""Pure NumPy/SciPy Kalman kernels.

Fallback backend for :mod:`railcount.kernels`; the compiled extension
implements the same three functions with identical semantics.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


def kf_predict(mean, cov, transition, process_noise):
    """Linear prediction: mean <- F mean, cov <- F cov F^T + Q (re-symmetrized)."""
    new_mean = transition @ mean
    new_cov = transition @ cov @ transition.T + process_noise
    return new_mean, 0.5 * (new_cov + new_cov.T)


def kf_update(mean, cov, obs_matrix, meas_noise, innovation):
    """Measurement correction for innovation ``z - h(mean)``.

    Works for linear and linearized (EKF) updates alike: the caller supplies
    the observation matrix (or Jacobian) and the precomputed innovation.
    The covariance uses the Joseph form, which stays positive semi-definite
    under rounding even for badly scaled states. Raises
    ``numpy.linalg.LinAlgError`` when the innovation covariance is not
    positive definite.
    """
    s = obs_matrix @ cov @ obs_matrix.T + meas_noise
    chol, lower = scipy.linalg.cho_factor(s, lower=True, check_finite=False)
    gain = scipy.linalg.cho_solve(
        (chol, lower), (cov @ obs_matrix.T).T, check_finite=False
    ).T
    new_mean = mean + gain @ innovation
    closed = np.eye(len(mean)) - gain @ obs_matrix
    new_cov = closed @ cov @ closed.T + gain @ meas_noise @ gain.T
    return new_mean, 0.5 * (new_cov + new_cov.T)


def kf_gating(cov, obs_matrix, meas_noise, innovations):
    """Squared Mahalanobis distance of each innovation row.

    ``innovations`` has shape (k, m). Returns shape (k,); a singular
    innovation covariance yields +inf for every entry (never matches).
    """
    innovations = np.atleast_2d(innovations)
    s = obs_matrix @ cov @ obs_matrix.T + meas_noise
    try:
        chol = np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        return np.full(innovations.shape[0], np.inf)
    z = scipy.linalg.solve_triangular(
        chol, innovations.T, lower=True, check_finite=False
    )
    return np.sum(z * z, axis=0)
