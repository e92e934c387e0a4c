"""Canonical correlation analysis between paired activation matrices.

Covariances are column-centered by default and scaled by 1/(n-1); the
solver whitens both sides with regularized inverse square roots and reads
the canonical pairs off the SVD of the whitened cross-covariance.  An
uncentered mode reproduces plain product moments for comparison runs.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import NumericError


@dataclass
class CovTriple:
    """Within- and cross-view covariance blocks of one matched pair."""

    ss: np.ndarray
    st: np.ndarray
    tt: np.ndarray
    n: int
    mean_source: np.ndarray
    mean_target: np.ndarray
    centered: bool = True


@dataclass
class CcaProjection:
    """Canonical directions of one matched pair, columns sorted by correlation."""

    v_source: np.ndarray
    v_target: np.ndarray
    correlations: np.ndarray
    mean_source: np.ndarray
    mean_target: np.ndarray
    centered: bool = True

    @property
    def k(self):
        return self.v_source.shape[1]


def covariances(h_source, h_target, center=True):
    """Covariance blocks of two paired views (equal row counts)."""
    hs = np.asarray(h_source)
    ht = np.asarray(h_target)
    common = np.result_type(hs, ht, np.float32)
    hs = hs.astype(common, copy=False)
    ht = ht.astype(common, copy=False)
    if hs.ndim != 2 or ht.ndim != 2 or hs.shape[0] != ht.shape[0]:
        raise ValueError(
            f"views must be 2-D with equal row counts, got {hs.shape} and {ht.shape}"
        )
    n = hs.shape[0]
    if n < 2:
        raise ValueError("need at least 2 paired samples")
    if center:
        mean_s = hs.mean(axis=0)
        mean_t = ht.mean(axis=0)
    else:
        mean_s = np.zeros(hs.shape[1], dtype=hs.dtype)
        mean_t = np.zeros(ht.shape[1], dtype=ht.dtype)
    cs = hs - mean_s
    ct = ht - mean_t
    scale = 1.0 / (n - 1)
    return CovTriple(
        ss=scale * (cs.T @ cs),
        st=scale * (cs.T @ ct),
        tt=scale * (ct.T @ ct),
        n=n,
        mean_source=mean_s,
        mean_target=mean_t,
        centered=center,
    )


def default_reg(cov_block):
    """Regularizer scaled to the average variance of a covariance block."""
    d = cov_block.shape[0]
    return 1e-4 * float(np.trace(cov_block)) / d


def _inv_sqrt_psd(mat, reg):
    d = mat.shape[0]
    reg_mat = mat + reg * np.eye(d, dtype=mat.dtype)
    vals, vecs = scipy.linalg.eigh(reg_mat)
    floor = 1e-12 * max(vals.max(), 1.0)
    if vals.min() < -1e-8 * max(abs(vals).max(), 1.0):
        raise NumericError(
            "covariance is not positive semidefinite after regularization; "
            "increase reg"
        )
    vals = np.maximum(vals, floor)
    return (vecs / np.sqrt(vals)) @ vecs.T


def solve_cca(cov, k, reg=None):
    """Top-k canonical direction pairs of a :class:`CovTriple`.

    Whitens each side with (cov + reg*I)^(-1/2) and takes the singular
    decomposition of the whitened cross block.  ``reg=None`` picks a
    trace-scaled default per side.  The reported correlations are the
    empirical per-direction correlations of the fit data, clipped to
    [0, 1] and sorted descending.  Each pair's sign is fixed so that the
    largest-magnitude source loading is positive.
    """
    ds, dt = cov.st.shape
    if not 1 <= k <= min(ds, dt):
        raise ValueError(f"k={k} out of range for views of width {ds} and {dt}")
    reg_s = default_reg(cov.ss) if reg is None else reg
    reg_t = default_reg(cov.tt) if reg is None else reg
    if reg_s < 0 or reg_t < 0:
        raise ValueError("reg must be >= 0")
    try:
        # Cholesky whitening; much cheaper than the symmetric root and
        # yields the same directions
        l_s = scipy.linalg.cholesky(
            cov.ss + reg_s * np.eye(ds, dtype=cov.ss.dtype), lower=True
        )
        l_t = scipy.linalg.cholesky(
            cov.tt + reg_t * np.eye(dt, dtype=cov.tt.dtype), lower=True
        )
        white = scipy.linalg.solve_triangular(l_s, cov.st, lower=True)
        white = scipy.linalg.solve_triangular(l_t, white.T, lower=True).T
        u, _, vt = scipy.linalg.svd(white, full_matrices=False)
        v_source = scipy.linalg.solve_triangular(l_s, u[:, :k], lower=True, trans="T")
        v_target = scipy.linalg.solve_triangular(l_t, vt[:k].T, lower=True, trans="T")
    except np.linalg.LinAlgError:
        # semidefinite side: fall back to the floored symmetric root
        wi_s = _inv_sqrt_psd(cov.ss, reg_s)
        wi_t = _inv_sqrt_psd(cov.tt, reg_t)
        u, _, vt = scipy.linalg.svd(wi_s @ cov.st @ wi_t, full_matrices=False)
        v_source = wi_s @ u[:, :k]
        v_target = wi_t @ vt[:k].T

    for j in range(k):
        pivot = np.argmax(np.abs(v_source[:, j]))
        if v_source[pivot, j] < 0:
            v_source[:, j] = -v_source[:, j]
            v_target[:, j] = -v_target[:, j]

    # empirical correlations of the fit data under the solved directions;
    # only the diagonals are needed
    num = ((cov.st @ v_target) * v_source).sum(axis=0)
    var_s = ((cov.ss @ v_source) * v_source).sum(axis=0)
    var_t = ((cov.tt @ v_target) * v_target).sum(axis=0)
    denom = np.sqrt(np.maximum(var_s * var_t, np.finfo(num.dtype).tiny))
    corr = np.clip(np.abs(num) / denom, 0.0, 1.0)

    order = np.argsort(-corr, kind="stable")
    return CcaProjection(
        v_source=v_source[:, order],
        v_target=v_target[:, order],
        correlations=corr[order],
        mean_source=cov.mean_source,
        mean_target=cov.mean_target,
        centered=cov.centered,
    )


def project(h, v, mean=None):
    """Project rows of ``h`` onto the directions ``v`` after centering."""
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[1] != v.shape[0]:
        raise ValueError(f"cannot project shape {h.shape} through {v.shape}")
    if mean is not None:
        h = h - mean
    return h @ v


def correlation_score(h_source, h_target, proj, normalized=True):
    """Summed per-direction correlation of paired data under ``proj``.

    Each direction contributes the absolute empirical correlation of the
    two projected coordinates.  On the data the projection was fitted to
    this reproduces the stored correlations.  With ``normalized`` the sum
    is divided by the direction count so a perfectly correlated pair
    scores 1.
    """
    us = project(h_source, proj.v_source, proj.mean_source)
    ut = project(h_target, proj.v_target, proj.mean_target)
    if proj.centered:
        us = us - us.mean(axis=0)
        ut = ut - ut.mean(axis=0)
    num = np.einsum("ij,ij->j", us, ut)
    den = np.sqrt(
        np.maximum(
            np.einsum("ij,ij->j", us, us) * np.einsum("ij,ij->j", ut, ut),
            np.finfo(num.dtype).tiny,
        )
    )
    corr = np.abs(num) / den
    total = float(corr.sum())
    if normalized:
        total /= proj.k
    return total
