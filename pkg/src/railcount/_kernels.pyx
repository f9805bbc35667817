# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Kalman kernels.

Same contract as railcount._kernels_py; fixed-size C loops avoid the
per-call overhead of small-matrix NumPy operations in the per-track
predict/update/gating hot path. State dimension is capped at 12 and
measurement dimension at 4 (the largest model in the package).
"""

from libc.math cimport INFINITY, sqrt

import numpy as np

# stack buffer capacities: MAX_N = 12 state dims, MAX_M = 4 measurement dims


cdef int _cholesky(double* a, int m) noexcept nogil:
    """In-place lower Cholesky of a row-major m x m matrix; -1 if not PD."""
    cdef int i, j, k
    cdef double s
    for i in range(m):
        for j in range(i + 1):
            s = a[i * m + j]
            for k in range(j):
                s -= a[i * m + k] * a[j * m + k]
            if i == j:
                if s <= 0.0:
                    return -1
                a[i * m + i] = sqrt(s)
            else:
                a[i * m + j] = s / a[j * m + j]
    return 0


cdef void _chol_solve_vec(double* chol, double* b, double* x, int m) noexcept nogil:
    """Solve (L L^T) x = b given the lower Cholesky factor in ``chol``."""
    cdef int i, k
    cdef double s
    for i in range(m):
        s = b[i]
        for k in range(i):
            s -= chol[i * m + k] * x[k]
        x[i] = s / chol[i * m + i]
    for i in range(m - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, m):
            s -= chol[k * m + i] * x[k]
        x[i] = s / chol[i * m + i]


def kf_predict(double[:] mean, double[:, :] cov, double[:, :] transition,
               double[:, :] process_noise):
    """Linear prediction: mean <- F mean, cov <- F cov F^T + Q (re-symmetrized)."""
    cdef int n = mean.shape[0]
    if n > 12:
        raise ValueError("state dimension exceeds kernel capacity")
    out_mean_arr = np.empty(n)
    out_cov_arr = np.empty((n, n))
    cdef double[:] out_mean = out_mean_arr
    cdef double[:, :] out_cov = out_cov_arr
    cdef double tmp[144]
    cdef int i, j, k
    cdef double s
    with nogil:
        for i in range(n):
            s = 0.0
            for k in range(n):
                s += transition[i, k] * mean[k]
            out_mean[i] = s
        # tmp = F @ cov
        for i in range(n):
            for j in range(n):
                s = 0.0
                for k in range(n):
                    s += transition[i, k] * cov[k, j]
                tmp[i * n + j] = s
        # out = tmp @ F^T + Q, symmetrized
        for i in range(n):
            for j in range(i, n):
                s = 0.0
                for k in range(n):
                    s += tmp[i * n + k] * transition[j, k]
                s += 0.5 * (process_noise[i, j] + process_noise[j, i])
                out_cov[i, j] = s
                out_cov[j, i] = s
    return out_mean_arr, out_cov_arr


def kf_update(double[:] mean, double[:, :] cov, double[:, :] obs_matrix,
              double[:, :] meas_noise, double[:] innovation):
    """Measurement correction (Joseph-form covariance); raises
    numpy.linalg.LinAlgError if S is not PD."""
    cdef int n = mean.shape[0]
    cdef int m = innovation.shape[0]
    if n > 12 or m > 4:
        raise ValueError("dimension exceeds kernel capacity")
    out_mean_arr = np.empty(n)
    out_cov_arr = np.empty((n, n))
    cdef double[:] out_mean = out_mean_arr
    cdef double[:, :] out_cov = out_cov_arr
    cdef double pht[48]
    cdef double s_mat[16]
    cdef double chol[16]
    cdef double gain[48]
    cdef double closed[144]
    cdef double tmp[144]
    cdef double gr[48]
    cdef double rhs[4]
    cdef double sol[4]
    cdef int i, j, k
    cdef double s
    cdef int status
    with nogil:
        # PHt = cov @ H^T
        for i in range(n):
            for j in range(m):
                s = 0.0
                for k in range(n):
                    s += cov[i, k] * obs_matrix[j, k]
                pht[i * m + j] = s
        # S = H @ PHt + R
        for i in range(m):
            for j in range(m):
                s = meas_noise[i, j]
                for k in range(n):
                    s += obs_matrix[i, k] * pht[k * m + j]
                s_mat[i * m + j] = s
        for i in range(m * m):
            chol[i] = s_mat[i]
        status = _cholesky(chol, m)
        if status == 0:
            # gain rows: solve S x = PHt[i, :]
            for i in range(n):
                for j in range(m):
                    rhs[j] = pht[i * m + j]
                _chol_solve_vec(chol, rhs, sol, m)
                for j in range(m):
                    gain[i * m + j] = sol[j]
            for i in range(n):
                s = mean[i]
                for k in range(m):
                    s += gain[i * m + k] * innovation[k]
                out_mean[i] = s
            # closed = I - gain @ H
            for i in range(n):
                for j in range(n):
                    s = 1.0 if i == j else 0.0
                    for k in range(m):
                        s -= gain[i * m + k] * obs_matrix[k, j]
                    closed[i * n + j] = s
            # tmp = closed @ cov
            for i in range(n):
                for j in range(n):
                    s = 0.0
                    for k in range(n):
                        s += closed[i * n + k] * cov[k, j]
                    tmp[i * n + j] = s
            # gr = gain @ R
            for i in range(n):
                for j in range(m):
                    s = 0.0
                    for k in range(m):
                        s += gain[i * m + k] * meas_noise[k, j]
                    gr[i * m + j] = s
            # out_cov = tmp @ closed^T + gr @ gain^T, symmetrized
            for i in range(n):
                for j in range(i, n):
                    s = 0.0
                    for k in range(n):
                        s += tmp[i * n + k] * closed[j * n + k]
                    for k in range(m):
                        s += gr[i * m + k] * gain[j * m + k]
                    out_cov[i, j] = s
                    out_cov[j, i] = s
    if status != 0:
        raise np.linalg.LinAlgError("innovation covariance not positive definite")
    return out_mean_arr, out_cov_arr


def kf_gating(double[:, :] cov, double[:, :] obs_matrix, double[:, :] meas_noise,
              double[:, :] innovations):
    """Squared Mahalanobis distance per innovation row; +inf when S is singular."""
    cdef int n = cov.shape[0]
    cdef int m = innovations.shape[1]
    cdef int count = innovations.shape[0]
    if n > 12 or m > 4:
        raise ValueError("dimension exceeds kernel capacity")
    out_arr = np.empty(count)
    cdef double[:] out = out_arr
    cdef double pht[48]
    cdef double chol[16]
    cdef double y[4]
    cdef int i, j, k, r
    cdef double s
    cdef int status
    with nogil:
        for i in range(n):
            for j in range(m):
                s = 0.0
                for k in range(n):
                    s += cov[i, k] * obs_matrix[j, k]
                pht[i * m + j] = s
        for i in range(m):
            for j in range(m):
                s = meas_noise[i, j]
                for k in range(n):
                    s += obs_matrix[i, k] * pht[k * m + j]
                chol[i * m + j] = s
        status = _cholesky(chol, m)
        if status == 0:
            for r in range(count):
                # forward-substitute L y = innovation, accumulate |y|^2
                for i in range(m):
                    s = innovations[r, i]
                    for k in range(i):
                        s -= chol[i * m + k] * y[k]
                    y[i] = s / chol[i * m + i]
                s = 0.0
                for i in range(m):
                    s += y[i] * y[i]
                out[r] = s
        else:
            for r in range(count):
                out[r] = INFINITY
    return out_arr
