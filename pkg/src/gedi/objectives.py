"""Training objectives, all in minimization form.

loss_inv: cross-entropy between predictions on an augmented view and the clean
view (optimum 0). loss_prior: cross-entropy from uniform to the batch-mean
prediction (optimum ln c), or the negated entropy of that mean. loss_gen:
surrogate whose gradient is the two-expectation generative estimator.
semantic_prob/loss_nesy: weighted model count of the digit-addition constraint
and its negative log.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import LOG_CLAMP, ShapeError, Tensor, log, mul, scale, take_cols, tmean, tsum
from .nn import energy, predict
from .sampler import sample_with_buffer

PRIOR_MODES = ("cross_entropy", "entropy_of_mean")

# Ordered digit pairs (a, b) with a + b <= 9, and their sums: the models of
# the addition constraint over three digit variables.
VALID_A = np.array([a for a in range(10) for b in range(10) if a + b <= 9])
VALID_B = np.array([b for a in range(10) for b in range(10) if a + b <= 9])
VALID_SUM = VALID_A + VALID_B


@dataclass
class LossWeights:
    w_gen: float = 1.0
    w_inv: float = 50.0
    w_prior: float = 10.0
    w_nesy: float = 0.0

    def __post_init__(self):
        for name in ("w_gen", "w_inv", "w_prior", "w_nesy"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be a finite non-negative number, got {v}")
            setattr(self, name, v)


@dataclass
class LossReport:
    """Per-term values for one batch; inactive terms are NaN."""

    loss_inv: float = float("nan")
    loss_prior: float = float("nan")
    loss_gen: float = float("nan")
    loss_nesy: float = float("nan")
    composite: float = float("nan")


@dataclass
class TrainBatch:
    """Inputs the composite loss can draw on; unused fields stay None."""

    x: np.ndarray
    x_aug: np.ndarray | None = None
    triplet: tuple | None = None  # (imgs1, imgs2, imgs3)


def _as_array(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def loss_inv(params, x, x_aug):
    """Mean cross-entropy CE(p(y|x_aug), p(y|x)); both views get gradients."""
    x = _as_array(x)
    x_aug = _as_array(x_aug)
    if x.shape != x_aug.shape:
        raise ShapeError("loss_inv", x.shape, x_aug.shape)
    p_clean = predict(params, x)
    p_aug = predict(params, x_aug)
    return scale(tmean(tsum(mul(p_aug, log(p_clean)), axis=1)), -1.0)


def loss_prior(params, x, mode="cross_entropy"):
    """Uniformity pressure on the batch-mean prediction q over clean inputs.

    cross_entropy: CE(uniform, q) = -(1/c) sum_y log q_y, optimum ln c.
    entropy_of_mean: -H(q), optimum -ln c.
    """
    if mode not in PRIOR_MODES:
        raise ValueError(f"mode must be one of {PRIOR_MODES}, got {mode!r}")
    q_bar = tmean(predict(params, x), axis=0)
    if mode == "cross_entropy":
        return scale(tmean(log(q_bar)), -1.0)
    return tsum(mul(q_bar, log(q_bar)))


def loss_gen_surrogate(params, data_batch, model_batch):
    """mean_model logsumexp(f/tau) - mean_data logsumexp(f/tau).

    Only the gradient is meaningful: it equals minus the generative ascent
    direction, with model samples held constant.
    """
    return tmean(energy(params, Tensor(_as_array(data_batch)))) - \
        tmean(energy(params, Tensor(_as_array(model_batch))))


def _check_prob_rows(name, p):
    sums = np.sum(p.data, axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise ValueError(f"{name}: rows must sum to 1 (max |sum-1| = {worst:.3g})")


def semantic_prob(p1, p2, p3):
    """Probability that digits drawn from (p1, p2, p3) satisfy d1 + d2 = d3.

    Weighted model count over the 55 valid (a, b, a+b) triples. Inputs are
    (n, 10) probability rows (Tensors or arrays); returns an (n,) Tensor.
    """
    tensors = []
    for name, p in (("p1", p1), ("p2", p2), ("p3", p3)):
        if isinstance(p, Tensor):
            t = p
        else:
            arr = np.asarray(p, dtype=np.float64)
            t = Tensor(arr[None, :] if arr.ndim == 1 else arr)
        if t.ndim != 2 or t.shape[1] != 10:
            raise ShapeError("semantic_prob", t.shape, ("n", 10))
        _check_prob_rows(name, t)
        tensors.append(t)
    t1, t2, t3 = tensors
    worlds = mul(mul(take_cols(t1, VALID_A), take_cols(t2, VALID_B)), take_cols(t3, VALID_SUM))
    return tsum(worlds, axis=1)


def loss_nesy(params, imgs1, imgs2, imgs3):
    """Mean negative log probability of the addition constraint per triplet.

    The clamped log bounds the loss at -ln(1e-12) when the constraint
    probability underflows.
    """
    p = semantic_prob(predict(params, imgs1), predict(params, imgs2), predict(params, imgs3))
    return scale(tmean(log(p)), -1.0)


def composite(params, batch, weights, buffer=None, sgld_cfg=None, prior_mode="cross_entropy"):
    """Weighted sum of the active terms; zero-weight terms are skipped outright.

    Skipping matters for the generative term: with w_gen = 0 no SGLD runs and
    the buffer is untouched. Returns (scalar Tensor, LossReport).
    """
    report = LossReport()
    total = Tensor(0.0)
    if weights.w_inv > 0:
        if batch.x_aug is None:
            raise ValueError("w_inv > 0 requires an augmented view in the batch")
        term = loss_inv(params, batch.x, batch.x_aug)
        report.loss_inv = term.item()
        total = total + scale(term, weights.w_inv)
    if weights.w_prior > 0:
        term = loss_prior(params, batch.x, prior_mode)
        report.loss_prior = term.item()
        total = total + scale(term, weights.w_prior)
    if weights.w_gen > 0:
        if buffer is None or sgld_cfg is None:
            raise ValueError("w_gen > 0 requires a replay buffer and an SGLD config")
        model_batch = sample_with_buffer(params, buffer, len(batch.x), sgld_cfg)
        term = loss_gen_surrogate(params, batch.x, model_batch)
        report.loss_gen = term.item()
        total = total + scale(term, weights.w_gen)
    if weights.w_nesy > 0:
        if batch.triplet is None:
            raise ValueError("w_nesy > 0 requires triplet image batches")
        term = loss_nesy(params, *batch.triplet)
        report.loss_nesy = term.item()
        total = total + scale(term, weights.w_nesy)
    report.composite = total.item()
    return total, report


def clamped_log_floor():
    """Most negative value the clamped log can produce."""
    return float(np.log(LOG_CLAMP))
