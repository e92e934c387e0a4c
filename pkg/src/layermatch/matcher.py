"""Coupled-layer plans: enumeration, joint training, and selection.

A plan names which encoder layers of the two networks are tied together
by correlation terms during training.  Candidate plans are enumerated
exhaustively, each is trained by alternating projection refits with
coupled gradient steps, and the plan with the lowest unified objective
(reconstruction over summed correlation) wins.
"""

import itertools
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import cca, sae
from ._backend import get_backend
from .data import SigmoidRange
from .exceptions import NumericError

DEPTH_MIN = 2
DEPTH_MAX = 5

# correlation below this is treated as degenerate: objective becomes
# infinite instead of dividing by noise
P_FLOOR = 1e-9


@dataclass(frozen=True)
class MatchingPlan:
    """Layer coupling between an ``a``-layer and a ``b``-layer network.

    Layers are numbered from 1 with the input as layer 1.  ``pairs``
    holds (source layer, target layer) couples, strictly increasing in
    both coordinates and always ending with the top pair (a, b).
    """

    a: int
    b: int
    pairs: tuple

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(tuple(p) for p in self.pairs))
        for depth in (self.a, self.b):
            if not DEPTH_MIN <= depth <= DEPTH_MAX:
                raise ValueError(f"depth {depth} outside [{DEPTH_MIN}, {DEPTH_MAX}]")
        if not self.pairs:
            raise ValueError("plan needs at least the top pair")
        if self.pairs[-1] != (self.a, self.b):
            raise ValueError(f"plan must end with the top pair ({self.a}, {self.b})")
        for i, j in self.pairs:
            if not (2 <= i <= self.a and 2 <= j <= self.b):
                raise ValueError(f"pair ({i}, {j}) outside the hidden-layer grid")
        for (i0, j0), (i1, j1) in zip(self.pairs, self.pairs[1:]):
            if not (i0 < i1 and j0 < j1):
                raise ValueError("pairs must be strictly increasing in both coordinates")
        if len(self.pairs) > min(self.a - 1, self.b - 1):
            raise ValueError("more pairs than hidden levels of the shallower network")

    @property
    def m(self):
        return len(self.pairs)

    @property
    def shape(self):
        """(pair count, source depth, target depth) identity of the plan."""
        return (self.m, self.a, self.b)

    @property
    def label(self):
        joined = ",".join(f"{i}:{j}" for i, j in self.pairs)
        return f"m{self.m}-d{self.a}x{self.b}[{joined}]"

    def is_full_rank(self):
        return self.m == min(self.a - 1, self.b - 1)


def enumerate_matchings(a, b, full_rank_only=False, monotone=True):
    """All candidate plans for depths (a, b), in lexicographic order.

    Order-preserving pair sets over hidden layers {2..a} x {2..b} that
    contain the top pair.  ``full_rank_only`` keeps only plans where
    every hidden level of the shallower network is matched.  With
    ``monotone=False`` crossing couplings are enumerated too (study
    mode); each still pairs distinct layers on both sides.
    """
    for depth in (a, b):
        if not DEPTH_MIN <= depth <= DEPTH_MAX:
            raise ValueError(f"depth {depth} outside [{DEPTH_MIN}, {DEPTH_MAX}]")
    max_m = min(a - 1, b - 1)
    sizes = [max_m] if full_rank_only else range(1, max_m + 1)
    seen = set()
    plans = []
    for m in sizes:
        for src in itertools.combinations(range(2, a), m - 1):
            if monotone:
                tgt_choices = itertools.combinations(range(2, b), m - 1)
            else:
                tgt_choices = itertools.permutations(range(2, b), m - 1)
            for tgt in tgt_choices:
                pairs = tuple(zip(src, tgt)) + ((a, b),)
                key = tuple(sorted(pairs))
                if key in seen:
                    continue
                seen.add(key)
                if monotone:
                    plans.append(MatchingPlan(a, b, pairs))
                else:
                    plans.append(_loose_plan(a, b, key))
    plans.sort(key=lambda p: (p.m, p.pairs))
    return plans


class _LoosePlan(MatchingPlan):
    """Plan variant without the order-preserving requirement."""

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(tuple(p) for p in self.pairs))
        src = [i for i, _ in self.pairs]
        tgt = [j for _, j in self.pairs]
        if len(set(src)) != len(src) or len(set(tgt)) != len(tgt):
            raise ValueError("pairs must use distinct layers on both sides")
        if (self.a, self.b) not in self.pairs:
            raise ValueError(f"plan must contain the top pair ({self.a}, {self.b})")


def _loose_plan(a, b, pairs):
    ordered = tuple(sorted(pairs))
    if ordered[-1] != (a, b):
        ordered = tuple(p for p in ordered if p != (a, b)) + ((a, b),)
    return _LoosePlan(a, b, ordered)


def network_widths(input_dim, depth, top_width):
    """Layer widths interpolated linearly from the input to the top."""
    if depth < 2:
        raise ValueError("depth must be at least 2")
    if top_width < 1:
        raise ValueError("top width must be positive")
    widths = np.rint(np.linspace(input_dim, top_width, depth)).astype(int)
    return [int(w) for w in widths]


@dataclass
class TrainConfig:
    """Knobs of the joint training loop."""

    top_width: int = 30
    hyper: sae.SaeHyperParams = field(default_factory=sae.SaeHyperParams)
    max_iters: int = 20
    steps_per_iter: int = 1
    step_batch: int = None
    pretrain_epochs: int = 0
    pretrain_lr: float = None
    pretrain_batch: int = None
    pretrain_noise: float = 0.0
    tol: float = 1e-4
    patience: int = 3
    fine_tune_epochs: int = 15
    cca_reg: float = None
    center: bool = True
    dtype: str = "float64"
    backend: str = None


@dataclass
class TrainedModel:
    """Converged pair of networks with fitted per-pair projections."""

    plan: MatchingPlan
    theta_source: sae.NetworkParams
    theta_target: sae.NetworkParams
    projections: list
    objective: float
    loss_trace: list
    converged: bool
    n_iters: int
    range_source: SigmoidRange
    range_target: SigmoidRange
    weight_decay: float = 1.0

    def _net(self, side):
        if side == "source":
            return self.theta_source, self.range_source
        if side == "target":
            return self.theta_target, self.range_target
        raise ValueError(f"side must be 'source' or 'target', got {side!r}")

    def embed(self, x, side):
        """Top-layer activations of standardized features from one domain."""
        params, rng = self._net(side)
        dtype = params.weights[0].dtype
        return sae.forward(params, rng.apply(x).astype(dtype)).top

    def common_subspace(self, x, side):
        """Coordinates of ``x`` in the shared top-pair subspace."""
        proj = self.projections[-1]
        h = self.embed(x, side)
        if side == "source":
            return cca.project(h, proj.v_source, proj.mean_source)
        return cca.project(h, proj.v_target, proj.mean_target)


def _fit_projections(plan, stack_s, stack_t, config):
    projections = []
    for i, j in plan.pairs:
        hs = stack_s.layer(i)
        ht = stack_t.layer(j)
        k = min(config.top_width, hs.shape[1], ht.shape[1])
        cov = cca.covariances(hs, ht, center=config.center)
        projections.append(cca.solve_cca(cov, k, reg=config.cca_reg))
    return projections


def _correlation_sum(plan, stack_s, stack_t, projections):
    total = 0.0
    for (i, j), proj in zip(plan.pairs, projections):
        total += cca.correlation_score(stack_s.layer(i), stack_t.layer(j), proj)
    return total


def _objective(
    params_s, params_t, xs, xt, plan, projections, config, backend,
    stack_s=None, stack_t=None,
):
    if stack_s is None:
        stack_s = sae.forward(params_s, xs, backend=backend)
    if stack_t is None:
        stack_t = sae.forward(params_t, xt, backend=backend)
    p_total = _correlation_sum(plan, stack_s, stack_t, projections)
    decay = config.hyper.weight_decay
    rec = sae.reconstruction_loss(params_s, xs, decay, backend=backend)
    rec += sae.reconstruction_loss(params_t, xt, decay, backend=backend)
    if p_total <= P_FLOOR:
        return np.inf
    return rec / p_total


def _unit_columns(v):
    norms = np.sqrt(np.einsum("ij,ij->j", v, v))
    norms = np.maximum(norms, np.finfo(v.dtype).tiny)
    return v / norms


def _correlation_terms(plan, projections, own_stack, partner_stack, side):
    # whitened direction columns grow like the inverse activation
    # spread; the error signal uses unit columns so the coupling keeps
    # the canonical directions without that gain
    terms = []
    for (i, j), proj in zip(plan.pairs, projections):
        if side == "source":
            layer, v_self, mean_self = i, proj.v_source, proj.mean_source
            v_partner, mean_partner = proj.v_target, proj.mean_target
            h_partner = partner_stack.layer(j)
        else:
            layer, v_self, mean_self = j, proj.v_target, proj.mean_target
            v_partner, mean_partner = proj.v_source, proj.mean_source
            h_partner = partner_stack.layer(i)
        terms.append(
            sae.CorrelationTerm(
                layer,
                _unit_columns(v_self),
                mean_self,
                _unit_columns(v_partner),
                mean_partner,
                h_partner,
            )
        )
    return terms


def _slice_terms(terms, sl):
    # partner activations are row-aligned with the co block
    return [
        sae.CorrelationTerm(
            t.layer, t.v_self, t.mean_self, t.v_partner, t.mean_partner,
            t.h_partner[sl],
        )
        for t in terms
    ]


def train_joint(plan, split, config, seed=None):
    """Alternating optimization of both networks under one plan.

    Repeats two steps: refit per-pair projections on current activations,
    then take one coupled gradient step per domain (both domains see the
    same pre-step activation snapshot).  Stops when the relative change
    of the unified objective stays below ``config.tol`` for
    ``config.patience`` consecutive iterations, then runs a
    reconstruction-only fine-tune and refits the projections.
    """
    be = get_backend(config.backend)
    if seed is None:
        seed = split.seed
    dtype = np.dtype(config.dtype)
    range_s = SigmoidRange.fit(split.co_source)
    range_t = SigmoidRange.fit(split.co_target)
    xs = range_s.apply(split.co_source).astype(dtype)
    xt = range_t.apply(split.co_target).astype(dtype)

    params_s = sae.init_network(
        network_widths(xs.shape[1], plan.a, config.top_width),
        np.random.SeedSequence((seed, 0)),
    ).astype(dtype)
    params_t = sae.init_network(
        network_widths(xt.shape[1], plan.b, config.top_width),
        np.random.SeedSequence((seed, 1)),
    ).astype(dtype)
    if config.pretrain_epochs > 0:
        # shallow nets tolerate a larger step than the coupled deep phase
        pre_hyper = config.hyper
        if config.pretrain_lr is not None:
            pre_hyper = replace(pre_hyper, lr=config.pretrain_lr)
        params_s = sae.pretrain_layers(
            params_s, xs, config.pretrain_epochs, pre_hyper, backend=be,
            batch_size=config.pretrain_batch, noise=config.pretrain_noise,
            seed=np.random.SeedSequence((seed, 2)),
        )
        params_t = sae.pretrain_layers(
            params_t, xt, config.pretrain_epochs, pre_hyper, backend=be,
            batch_size=config.pretrain_batch, noise=config.pretrain_noise,
            seed=np.random.SeedSequence((seed, 3)),
        )

    trace = []
    projections = None
    converged = False
    streak = 0
    it = 0
    mom_s = sae.MomentumState()
    mom_t = sae.MomentumState()
    n_rows = xs.shape[0]
    if config.step_batch is None or config.step_batch >= n_rows:
        step_slices = [slice(0, n_rows)]
    else:
        step_slices = [
            slice(s, min(s + config.step_batch, n_rows))
            for s in range(0, n_rows, config.step_batch)
        ]
    step_count = 0
    try:
        for it in range(config.max_iters):
            stack_s = sae.forward(params_s, xs, backend=be)
            stack_t = sae.forward(params_t, xt, backend=be)
            projections = _fit_projections(plan, stack_s, stack_t, config)
            obj = _objective(
                params_s, params_t, xs, xt, plan, projections, config, be,
                stack_s=stack_s, stack_t=stack_t,
            )
            if trace and np.isfinite(obj) and np.isfinite(trace[-1]):
                rel = abs(obj - trace[-1]) / max(abs(trace[-1]), 1e-12)
                streak = streak + 1 if rel < config.tol else 0
            trace.append(obj)
            if streak >= config.patience:
                converged = True
                break
            terms_s = _correlation_terms(plan, projections, stack_s, stack_t, "source")
            terms_t = _correlation_terms(plan, projections, stack_t, stack_s, "target")
            # both domains keep stepping against the same activation
            # snapshot until the projections are refit; with step_batch the
            # steps walk row slices round-robin (terms are row-aligned)
            for _ in range(config.steps_per_iter):
                sl = step_slices[step_count % len(step_slices)]
                step_count += 1
                params_s = sae.coupled_gradient_step(
                    params_s, xs[sl], _slice_terms(terms_s, sl), config.hyper,
                    backend=be, state=mom_s,
                )
                params_t = sae.coupled_gradient_step(
                    params_t, xt[sl], _slice_terms(terms_t, sl), config.hyper,
                    backend=be, state=mom_t,
                )
        if config.max_iters > 0 and config.fine_tune_epochs > 0:
            params_s, _ = sae.fine_tune(
                params_s, xs, config.fine_tune_epochs, config.hyper, backend=be
            )
            params_t, _ = sae.fine_tune(
                params_t, xt, config.fine_tune_epochs, config.hyper, backend=be
            )
    except NumericError as exc:
        raise NumericError(
            f"training diverged at iteration {it} "
            f"(trace {[round(v, 4) for v in trace]}): {exc}"
        ) from exc

    stack_s = sae.forward(params_s, xs, backend=be)
    stack_t = sae.forward(params_t, xt, backend=be)
    projections = _fit_projections(plan, stack_s, stack_t, config)
    final = _objective(
        params_s, params_t, xs, xt, plan, projections, config, be,
        stack_s=stack_s, stack_t=stack_t,
    )
    trace.append(final)
    return TrainedModel(
        plan=plan,
        theta_source=params_s,
        theta_target=params_t,
        projections=projections,
        objective=float(final),
        loss_trace=[float(v) for v in trace],
        converged=converged,
        n_iters=it + 1 if config.max_iters > 0 else 0,
        range_source=range_s,
        range_target=range_t,
        weight_decay=config.hyper.weight_decay,
    )


def evaluate_objective(model, co_source, co_target):
    """Unified objective of a trained model on given co-occurrence data.

    Returns (recon_source + recon_target) / summed correlation score;
    infinite when the correlation mass is degenerate (never divides by
    noise).
    """
    be = get_backend()
    dtype = model.theta_source.weights[0].dtype
    xs = model.range_source.apply(co_source).astype(dtype)
    xt = model.range_target.apply(co_target).astype(dtype)
    stack_s = sae.forward(model.theta_source, xs, backend=be)
    stack_t = sae.forward(model.theta_target, xt, backend=be)
    p_total = _correlation_sum(model.plan, stack_s, stack_t, model.projections)
    decay = model.weight_decay
    rec = sae.reconstruction_loss(model.theta_source, xs, decay, backend=be)
    rec += sae.reconstruction_loss(model.theta_target, xt, decay, backend=be)
    if p_total <= P_FLOOR:
        return float(np.inf)
    return float(rec / p_total)


@dataclass
class PlanResult:
    """One candidate's training outcome inside a selection run."""

    plan: MatchingPlan
    model: TrainedModel
    objective: float
    seconds: float
    error: str = None


def train_all(plans, split, config, seed=None):
    """Train every candidate plan; failures are kept with infinite objective."""
    if seed is None:
        seed = split.seed
    results = []
    for index, plan in enumerate(plans):
        plan_seed = int(np.random.SeedSequence((seed, index)).generate_state(1)[0])
        start = time.perf_counter()
        try:
            model = train_joint(plan, split, config, seed=plan_seed)
            results.append(
                PlanResult(
                    plan=plan,
                    model=model,
                    objective=model.objective,
                    seconds=time.perf_counter() - start,
                )
            )
        except NumericError as exc:
            results.append(
                PlanResult(
                    plan=plan,
                    model=None,
                    objective=float(np.inf),
                    seconds=time.perf_counter() - start,
                    error=str(exc),
                )
            )
    return results


def select_best(plans, split, config, seed=None, results_out=None):
    """Train all plans and return (plan, model) with the lowest objective.

    Ties break toward fewer pairs, then lexicographic pair order.  Pass
    ``results_out`` (a list) to retain every candidate's result for
    reporting.
    """
    if not plans:
        raise ValueError("plans must be non-empty")
    results = train_all(plans, split, config, seed=seed)
    if results_out is not None:
        results_out.extend(results)
    finite = [r for r in results if np.isfinite(r.objective)]
    if not finite:
        raise NumericError("no candidate plan reached a finite objective")
    best = min(finite, key=lambda r: (r.objective, r.plan.m, r.plan.pairs))
    return best.plan, best.model
