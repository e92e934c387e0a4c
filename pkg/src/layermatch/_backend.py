"""Hot numeric kernels, compiled with numba when available.

The three kernels that dominate runtime are the sigmoid layer evaluation,
the backward error sweep, and the SVM dual coordinate-descent loop.  Each
has a pure-numpy twin; ``LAYERMATCH_BACKEND=numpy`` forces the fallback,
anything else (or an unimportable numba) is resolved at import time.
Both paths compute identical floating-point results: the numba kernels
avoid fastmath so the arithmetic order matches numpy's.

``benchmarks/bench_kernels.py`` times the two backends side by side.
"""

import os

import numpy as np


def _np_affine_sigmoid(h, w, b):
    # h: (n, d_in), w: (d_out, d_in), b: (d_out,)
    z = h @ w.T + b
    return 1.0 / (1.0 + np.exp(-z))


def _np_backward_delta(delta_up, w_up, h):
    # delta_up: (n, d_up), w_up: (d_up, d), h: (n, d)
    return (delta_up @ w_up) * (h * (1.0 - h))


def _np_dual_cd(xb, y, c, tol, max_passes):
    """Dual coordinate descent for the linear soft-margin SVM.

    ``xb`` is the bias-augmented sample matrix (n, d+1).  Sweeps the
    coordinates in a fixed cyclic order, so the result is deterministic
    for a given input order.  Returns (alpha, w, gap, passes) where gap
    is the final duality gap.
    """
    n, d = xb.shape
    alpha = np.zeros(n)
    w = np.zeros(d)
    qii = np.einsum("ij,ij->i", xb, xb)
    gap = np.inf
    passes = 0
    for _ in range(max_passes):
        passes += 1
        for i in range(n):
            if qii[i] <= 0.0:
                continue
            g = y[i] * (w @ xb[i]) - 1.0
            a_old = alpha[i]
            a_new = min(max(a_old - g / qii[i], 0.0), c)
            if a_new != a_old:
                w += (a_new - a_old) * y[i] * xb[i]
                alpha[i] = a_new
        margins = 1.0 - y * (xb @ w)
        hinge = np.where(margins > 0.0, margins, 0.0).sum()
        wnorm = 0.5 * (w @ w)
        primal = wnorm + c * hinge
        dual = alpha.sum() - wnorm
        gap = primal - dual
        if gap < tol * (1.0 + abs(primal)):
            break
    return alpha, w, gap, passes


_HAVE_NUMBA = False
if os.environ.get("LAYERMATCH_BACKEND", "numba").lower() != "numpy":
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:
        _HAVE_NUMBA = False

if _HAVE_NUMBA:

    @njit(cache=True)
    def _nb_affine_sigmoid(h, w, b):
        z = h @ w.T
        out = np.empty_like(z)
        for i in range(z.shape[0]):
            for j in range(z.shape[1]):
                out[i, j] = 1.0 / (1.0 + np.exp(-(z[i, j] + b[j])))
        return out

    @njit(cache=True)
    def _nb_backward_delta(delta_up, w_up, h):
        d = delta_up @ w_up
        out = np.empty_like(d)
        for i in range(d.shape[0]):
            for j in range(d.shape[1]):
                out[i, j] = d[i, j] * (h[i, j] * (1.0 - h[i, j]))
        return out

    @njit(cache=True)
    def _nb_dual_cd(xb, y, c, tol, max_passes):
        n, d = xb.shape
        alpha = np.zeros(n)
        w = np.zeros(d)
        qii = np.empty(n)
        for i in range(n):
            s = 0.0
            for j in range(d):
                s += xb[i, j] * xb[i, j]
            qii[i] = s
        gap = np.inf
        passes = 0
        for _ in range(max_passes):
            passes += 1
            for i in range(n):
                if qii[i] <= 0.0:
                    continue
                g = 0.0
                for j in range(d):
                    g += w[j] * xb[i, j]
                g = y[i] * g - 1.0
                a_old = alpha[i]
                a_new = a_old - g / qii[i]
                if a_new < 0.0:
                    a_new = 0.0
                elif a_new > c:
                    a_new = c
                if a_new != a_old:
                    step = (a_new - a_old) * y[i]
                    for j in range(d):
                        w[j] += step * xb[i, j]
                    alpha[i] = a_new
            hinge = 0.0
            for i in range(n):
                m = 0.0
                for j in range(d):
                    m += xb[i, j] * w[j]
                m = 1.0 - y[i] * m
                if m > 0.0:
                    hinge += m
            wnorm = 0.0
            for j in range(d):
                wnorm += w[j] * w[j]
            wnorm *= 0.5
            primal = wnorm + c * hinge
            dual = alpha.sum() - wnorm
            gap = primal - dual
            if gap < tol * (1.0 + abs(primal)):
                break
        return alpha, w, gap, passes


class Backend:
    """Bundle of the hot kernels for one implementation."""

    def __init__(self, name, affine_sigmoid, backward_delta, dual_cd):
        self.name = name
        self.affine_sigmoid = affine_sigmoid
        self.backward_delta = backward_delta
        self.dual_cd = dual_cd


_NUMPY_BACKEND = Backend("numpy", _np_affine_sigmoid, _np_backward_delta, _np_dual_cd)
if _HAVE_NUMBA:
    _NUMBA_BACKEND = Backend(
        "numba", _nb_affine_sigmoid, _nb_backward_delta, _nb_dual_cd
    )
else:
    _NUMBA_BACKEND = None


def available_backends():
    names = ["numpy"]
    if _NUMBA_BACKEND is not None:
        names.append("numba")
    return names


def get_backend(name=None):
    """Return a kernel backend by name, or the default for this process."""
    if name is None:
        name = os.environ.get("LAYERMATCH_BACKEND", "numba").lower()
        if name not in ("numpy", "numba"):
            name = "numba"
        if name == "numba" and _NUMBA_BACKEND is None:
            name = "numpy"
    if name == "numpy":
        return _NUMPY_BACKEND
    if name == "numba":
        if _NUMBA_BACKEND is None:
            raise ValueError("numba backend requested but numba is not importable")
        return _NUMBA_BACKEND
    raise ValueError(f"unknown backend {name!r}")


BACKEND = get_backend()
