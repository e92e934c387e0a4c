"""Stacked sigmoid autoencoders trained by hand-rolled backpropagation.

One network per domain.  The encoder maps the input through successively
narrower sigmoid layers; an untied decoder mirrors the widths back up to
the input for reconstruction.  Training supports a plain weight-decayed
reconstruction step and a coupled step that injects correlation-alignment
error terms at layers matched to a partner network (see
:func:`coupled_gradient_step`).
"""

from dataclasses import dataclass, field

import numpy as np

from ._backend import get_backend
from .exceptions import NumericError


@dataclass
class SaeHyperParams:
    """Training knobs: weight decay, step size, correlation weights.

    ``corr_weight`` scales the whole alignment error injected at matched
    layers.  The literal update uses 1; fitted whitening directions grow
    like the inverse activation spread, so practical runs need a smaller
    value to keep the coupled step from swamping reconstruction.
    """

    weight_decay: float = 1.0
    lr: float = 0.5
    omega: float = 1.0
    corr_weight: float = 1.0
    momentum: float = 0.0

    def __post_init__(self):
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.omega < 0:
            raise ValueError("omega must be >= 0")
        if self.corr_weight < 0:
            raise ValueError("corr_weight must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")


@dataclass
class NetworkParams:
    """Weights and biases of one domain's autoencoder.

    ``weights[l]`` has shape (widths[l+1], widths[l]); the decoder lists
    mirror the widths back down to the input dimension.
    """

    widths: list
    weights: list
    biases: list
    dec_weights: list
    dec_biases: list

    def copy(self):
        return NetworkParams(
            list(self.widths),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            [w.copy() for w in self.dec_weights],
            [b.copy() for b in self.dec_biases],
        )

    def layer_pairs(self):
        """All (W, b) pairs of the unrolled encoder+decoder, input to output."""
        return list(zip(self.weights + self.dec_weights, self.biases + self.dec_biases))

    def astype(self, dtype):
        return NetworkParams(
            list(self.widths),
            [w.astype(dtype) for w in self.weights],
            [b.astype(dtype) for b in self.biases],
            [w.astype(dtype) for w in self.dec_weights],
            [b.astype(dtype) for b in self.dec_biases],
        )


@dataclass
class ActivationStack:
    """Per-layer activations; ``layers[0]`` is the input matrix."""

    layers: list = field(default_factory=list)

    @property
    def top(self):
        return self.layers[-1]

    def layer(self, index):
        """Activation of 1-based layer ``index`` (1 = input)."""
        return self.layers[index - 1]


def init_network(widths, seed):
    """Create a network with uniform(-r, r) weights, r = sqrt(6/(fan_in+fan_out)).

    Biases start at zero.  Deterministic for a given seed.
    """
    widths = [int(w) for w in widths]
    if len(widths) < 2:
        raise ValueError("need at least an input and one hidden layer")
    if any(w < 1 for w in widths):
        raise ValueError(f"layer widths must be >= 1, got {widths}")
    rng = np.random.default_rng(seed)

    def draw(n_out, n_in):
        r = np.sqrt(6.0 / (n_in + n_out))
        return rng.uniform(-r, r, size=(n_out, n_in))

    weights = [draw(widths[l + 1], widths[l]) for l in range(len(widths) - 1)]
    biases = [np.zeros(widths[l + 1]) for l in range(len(widths) - 1)]
    rev = widths[::-1]
    dec_weights = [draw(rev[l + 1], rev[l]) for l in range(len(rev) - 1)]
    dec_biases = [np.zeros(rev[l + 1]) for l in range(len(rev) - 1)]
    return NetworkParams(widths, weights, biases, dec_weights, dec_biases)


def _check_input(params, x):
    x = np.asarray(x)
    if x.dtype.kind != "f":
        x = x.astype(float)
    if x.ndim != 2 or x.shape[1] != params.widths[0]:
        raise ValueError(
            f"input has shape {x.shape}, expected (n, {params.widths[0]})"
        )
    return x


def forward(params, x, backend=None):
    """Encoder pass: returns the activation stack [input, h1, ..., h_top]."""
    be = backend or get_backend()
    x = _check_input(params, x)
    layers = [x]
    h = x
    for w, b in zip(params.weights, params.biases):
        h = be.affine_sigmoid(h, w, b)
        layers.append(h)
    return ActivationStack(layers)


def forward_full(params, x, backend=None):
    """Full unrolled pass through encoder and decoder.

    Returns the list of activations of length 2*len(widths) - 1; the last
    entry is the sigmoid reconstruction of the input.
    """
    be = backend or get_backend()
    x = _check_input(params, x)
    layers = [x]
    h = x
    for w, b in params.layer_pairs():
        h = be.affine_sigmoid(h, w, b)
        layers.append(h)
    return layers


def weight_norm_sq(params):
    total = 0.0
    for w in params.weights:
        total += float((w * w).sum())
    for w in params.dec_weights:
        total += float((w * w).sum())
    return total


def reconstruction_loss(params, x, weight_decay, backend=None):
    """Mean half squared reconstruction error plus the weight-decay term."""
    stack = forward_full(params, x, backend=backend)
    recon = stack[-1]
    resid = recon - stack[0]
    loss = 0.5 * float((resid * resid).sum()) / stack[0].shape[0]
    return loss + 0.5 * weight_decay * weight_norm_sq(params)


class CorrelationTerm:
    """Alignment error injected at one matched encoder layer.

    Holds the fitted directions of this network (``v_self``) and of the
    partner layer (``v_partner``), the partner's activations, and the
    centering means recorded when the directions were fitted.
    """

    def __init__(self, layer, v_self, mean_self, v_partner, mean_partner, h_partner):
        self.layer = layer  # 1-based encoder layer index (2..len(widths))
        self.v_self = v_self
        self.mean_self = mean_self
        self.v_partner = v_partner
        self.mean_partner = mean_partner
        self.h_partner = h_partner


def _gradients(
    params, x, weight_decay, corr_terms=None, omega=1.0, corr_weight=1.0,
    backend=None, target=None,
):
    """Backward sweep over the unrolled network.

    Returns (grad_w, grad_b, stack): per-layer gradients of the mean
    reconstruction loss with weight decay, with the correlation error
    terms of matched layers mixed into the deltas on the way down.  The
    injected error is averaged over the canonical directions and scaled
    by ``corr_weight``.  ``target`` substitutes the reconstruction goal
    (denoising: forward a corrupted batch, reconstruct the clean one).
    """
    be = backend or get_backend()
    stack = forward_full(params, x, backend=backend)
    n = x.shape[0]
    pairs = params.layer_pairs()
    n_layers = len(pairs)
    by_layer = {}
    if corr_terms:
        by_layer = {term.layer: term for term in corr_terms}

    recon = stack[-1]
    goal = stack[0] if target is None else target
    delta = (recon - goal) * recon * (1.0 - recon)
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    for p in range(n_layers - 1, -1, -1):
        w, _ = pairs[p]
        h_below = stack[p]
        grad_w[p] = delta.T @ h_below / n + weight_decay * w
        grad_b[p] = delta.mean(axis=0)
        if p == 0:
            break
        delta = be.backward_delta(delta, w, h_below)
        # stack position p is encoder layer p+1 (1-based, input = layer 1)
        term = by_layer.get(p + 1)
        if term is not None:
            h = h_below
            sens = h * (1.0 - h)
            beta = ((term.h_partner - term.mean_partner) @ term.v_partner) @ term.v_self.T
            gamma = ((h - term.mean_self) @ term.v_self) @ term.v_self.T
            scale = corr_weight / term.v_self.shape[1]
            delta = delta + scale * (-beta + omega * gamma) * sens
    return grad_w, grad_b, stack


class MomentumState:
    """Velocity buffers for momentum descent; reused across steps."""

    __slots__ = ("vel",)

    def __init__(self):
        self.vel = None


def _apply_step(params, grad_w, grad_b, lr, momentum=0.0, state=None):
    n_enc = len(params.weights)
    out = params.copy()
    targets = [(out.weights[l], out.biases[l]) for l in range(n_enc)]
    targets += [(out.dec_weights[l], out.dec_biases[l]) for l in range(n_enc)]
    if momentum > 0.0 and state is not None:
        if state.vel is None:
            state.vel = [
                (np.zeros_like(w), np.zeros_like(b)) for w, b in targets
            ]
        for (w, b), (vw, vb), gw, gb in zip(targets, state.vel, grad_w, grad_b):
            vw *= momentum
            vw -= lr * gw
            vb *= momentum
            vb -= lr * gb
            w += vw
            b += vb
    else:
        for (w, b), gw, gb in zip(targets, grad_w, grad_b):
            w -= lr * gw
            b -= lr * gb
    return out


def _check_finite(params):
    for idx, (w, b) in enumerate(params.layer_pairs()):
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise NumericError(f"non-finite parameters at layer {idx}")


def coupled_gradient_step(
    params, co_data, corr_terms, hyper, backend=None, state=None, target=None
):
    """One full-batch descent step of the coupled objective.

    ``corr_terms`` lists one :class:`CorrelationTerm` per matched encoder
    layer of this network (empty for a plain autoencoder step).  The
    reconstruction error signal is propagated through the unrolled
    network; at each matched layer the cross-network alignment term is
    subtracted and the self-correlation term added back with weight
    ``hyper.omega``.  Weight updates take the decayed mean gradient, bias
    updates the mean delta.  Passing a :class:`MomentumState` keeps a
    velocity across successive steps when ``hyper.momentum`` is set;
    ``target`` overrides the reconstruction goal (see :func:`_gradients`).
    """
    grad_w, grad_b, _ = _gradients(
        params,
        co_data,
        hyper.weight_decay,
        corr_terms=corr_terms,
        omega=hyper.omega,
        corr_weight=hyper.corr_weight,
        backend=backend,
        target=target,
    )
    out = _apply_step(
        params, grad_w, grad_b, hyper.lr, momentum=hyper.momentum, state=state
    )
    _check_finite(out)
    return out


def fine_tune(params, co_data, epochs, hyper, backend=None, check_every=1, stop_tol=None):
    """Reconstruction-only backprop for up to ``epochs`` full-batch steps.

    Returns (params, loss_trace); the trace records the loss every
    ``check_every`` steps and always after the last.  With ``stop_tol``
    the loop ends early once the relative improvement between checks
    falls below it.  Raises :class:`NumericError` when the loss diverges.
    """
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if check_every < 1:
        raise ValueError("check_every must be >= 1")
    trace = []
    current = params
    state = MomentumState()
    for epoch in range(epochs):
        current = coupled_gradient_step(
            current, co_data, [], hyper, backend=backend, state=state
        )
        if (epoch + 1) % check_every and epoch + 1 < epochs:
            continue
        loss = reconstruction_loss(current, co_data, hyper.weight_decay, backend=backend)
        if not np.isfinite(loss) or loss > 1e6:
            raise NumericError(
                f"reconstruction loss diverged to {loss:.3g}; reduce the learning rate"
            )
        trace.append(loss)
        if stop_tol is not None and len(trace) >= 2:
            if trace[-2] - trace[-1] < stop_tol * abs(trace[-2]):
                break
    return current, trace


def pretrain_layers(
    params, x, epochs, hyper, backend=None, batch_size=None, noise=0.0, seed=0
):
    """Greedy layerwise pretraining of the stack, bottom up.

    Each encoder layer together with its mirrored decoder layer is
    trained as a one-hidden-layer autoencoder on the activations of the
    layer below, then the data is re-encoded to feed the next layer.
    Full-stack descent from random init stalls on the flat region where
    the decoder reproduces the data mean; shallow nets do not, so this
    leaves the stack inside the basin where joint training makes
    progress.  With ``batch_size`` the shallow steps cycle over
    contiguous row slices, which converges in far fewer sweeps than
    whole-batch descent.  ``noise`` masks that fraction of inputs per
    step while the clean rows stay the target, pushing the features away
    from pixel-copying toward the co-activation structure that survives
    masking.
    """
    if epochs <= 0:
        return params
    if not 0 <= noise < 1:
        raise ValueError("noise must be in [0, 1)")
    be = backend or get_backend()
    rng = np.random.default_rng(seed)
    out = params.copy()
    n_enc = len(out.weights)
    h = _check_input(out, x)
    n = h.shape[0]
    if batch_size is None or batch_size >= n:
        slices = [slice(0, n)]
    else:
        slices = [slice(s, min(s + batch_size, n)) for s in range(0, n, batch_size)]
    for p in range(n_enc):
        mirror = n_enc - 1 - p
        shallow = NetworkParams(
            [out.widths[p], out.widths[p + 1]],
            [out.weights[p]],
            [out.biases[p]],
            [out.dec_weights[mirror]],
            [out.dec_biases[mirror]],
        )
        state = MomentumState()
        for _ in range(epochs):
            for sl in slices:
                clean = h[sl]
                if noise > 0.0:
                    mask = rng.random(clean.shape) >= noise
                    fed = (clean * mask).astype(clean.dtype, copy=False)
                    shallow = coupled_gradient_step(
                        shallow, fed, [], hyper, backend=be, state=state,
                        target=clean,
                    )
                else:
                    shallow = coupled_gradient_step(
                        shallow, clean, [], hyper, backend=be, state=state
                    )
        loss = reconstruction_loss(shallow, h, hyper.weight_decay, backend=be)
        if not np.isfinite(loss) or loss > 1e6:
            raise NumericError(
                f"pretraining diverged at layer {p + 1} (loss {loss:.3g}); "
                "reduce the learning rate"
            )
        out.weights[p] = shallow.weights[0]
        out.biases[p] = shallow.biases[0]
        out.dec_weights[mirror] = shallow.dec_weights[0]
        out.dec_biases[mirror] = shallow.dec_biases[0]
        h = be.affine_sigmoid(h, out.weights[p], out.biases[p])
    return out


def gradient_check(widths, n_samples=8, weight_decay=0.1, seed=0, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    Perturbs every weight and bias of a freshly initialized network on
    random data and compares against the backward-sweep gradients of the
    reconstruction + weight-decay objective.
    """
    rng = np.random.default_rng(seed)
    params = init_network(widths, seed)
    x = rng.uniform(0.1, 0.9, size=(n_samples, widths[0]))
    grad_w, grad_b, _ = _gradients(params, x, weight_decay)
    n_enc = len(params.weights)
    arrays = params.weights + params.dec_weights + params.biases + params.dec_biases
    grads = (
        grad_w[:n_enc] + grad_w[n_enc:] + grad_b[:n_enc] + grad_b[n_enc:]
    )
    worst = 0.0
    for arr, g in zip(arrays, grads):
        flat = arr.ravel()
        gflat = np.asarray(g).ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            up = reconstruction_loss(params, x, weight_decay)
            flat[idx] = orig - eps
            down = reconstruction_loss(params, x, weight_decay)
            flat[idx] = orig
            numeric = (up - down) / (2.0 * eps)
            denom = max(abs(numeric) + abs(gflat[idx]), 1e-8)
            worst = max(worst, abs(numeric - gflat[idx]) / denom)
    return worst
