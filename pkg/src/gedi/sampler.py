"""SGLD sampling from the model density and the generative gradient estimator.

The chain update is x <- x - step_size * dE/dx + noise * eta with eta ~ N(0, I);
step size and noise scale are deliberately decoupled knobs. Persistent chains
live in a replay buffer whose slots are occasionally reinitialized.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, collect_grads, grad_wrt_input, tsum, tmean, logsumexp
from .nn import energy, scaled_logits

INIT_CHOICES = ("uniform_box", "unit_interval", "standard_normal")


class SgldDivergence(RuntimeError):
    """Chain state became non-finite; carries the offending step index."""

    def __init__(self, step):
        self.step = step
        super().__init__(f"SGLD chain diverged (non-finite state) at step {step}")


@dataclass
class SgldConfig:
    steps: int = 1
    step_size: float = 5e-5
    noise: float = 0.01
    reinit_prob: float = 0.05
    init: str = "uniform_box"
    bounds: tuple | None = None  # (lo, hi) arrays; required by uniform_box
    clamp: bool = False          # clamp states into bounds after every update

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.step_size < 0 or self.noise < 0:
            raise ValueError("step_size and noise must be non-negative")
        if not 0.0 <= self.reinit_prob <= 1.0:
            raise ValueError(f"reinit_prob must lie in [0, 1], got {self.reinit_prob}")
        if self.init not in INIT_CHOICES:
            raise ValueError(f"init must be one of {INIT_CHOICES}, got {self.init!r}")
        if self.init == "uniform_box" and self.bounds is None:
            raise ValueError("uniform_box init requires bounds=(lo, hi)")
        if self.clamp and self.bounds is None:
            raise ValueError("clamp=True requires bounds=(lo, hi)")


def _draw_init(cfg, n, dim, rng):
    if cfg.init == "uniform_box":
        lo, hi = (np.asarray(b, dtype=np.float64) for b in cfg.bounds)
        return rng.uniform(0.0, 1.0, (n, dim)) * (hi - lo) + lo
    if cfg.init == "unit_interval":
        return rng.uniform(0.0, 1.0, (n, dim))
    return rng.normal(0.0, 1.0, (n, dim))


class ReplayBuffer:
    """Persistent SGLD chain states; capacity rows, each a sample in progress."""

    def __init__(self, capacity, dim, cfg, rng):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self.dim = int(dim)
        self.rng = rng
        self.states = _draw_init(cfg, self.capacity, self.dim, rng)


def sgld_chain(params, x0, cfg, rng):
    """Run cfg.steps SGLD updates from x0; returns the final states.

    Gradients are taken w.r.t. the inputs only, so parameter .grad fields are
    untouched. Non-finite states abort with SgldDivergence.
    """
    x = np.array(x0, dtype=np.float64)
    if cfg.bounds is not None:
        lo, hi = (np.asarray(b, dtype=np.float64) for b in cfg.bounds)
    for step in range(cfg.steps):
        xt = Tensor(x)
        g = grad_wrt_input(tsum(energy(params, xt)), xt)
        x = x - cfg.step_size * g + cfg.noise * rng.normal(0.0, 1.0, x.shape)
        if cfg.clamp:
            x = np.clip(x, lo, hi)
        if not np.all(np.isfinite(x)):
            raise SgldDivergence(step)
    return x


def sample_with_buffer(params, buffer, batch, cfg):
    """Draw a model batch: pick buffer slots, maybe reinit, run SGLD, write back.

    Only the drawn slots change. Randomness comes from the buffer's own stream.
    """
    if batch > buffer.capacity:
        raise ValueError(f"batch {batch} exceeds buffer capacity {buffer.capacity}")
    rng = buffer.rng
    slots = rng.choice(buffer.capacity, size=batch, replace=False)
    x0 = buffer.states[slots].copy()
    reinit = rng.uniform(0.0, 1.0, batch) < cfg.reinit_prob
    if np.any(reinit):
        x0[reinit] = _draw_init(cfg, int(reinit.sum()), buffer.dim, rng)
    x = sgld_chain(params, x0, cfg, rng)
    buffer.states[slots] = x
    return x


def generative_grad(params, data_batch, model_batch):
    """Two-expectation estimator of the generative ascent direction.

    Returns grad_Theta[ mean_data logsumexp(f/tau) - mean_model logsumexp(f/tau) ]
    as a list aligned with params.parameters(). This is the ascent direction
    for the generative term (equivalently, minus the gradient of
    loss_gen_surrogate); model samples are treated as constants. Parameter
    .grad fields are not modified.
    """
    obj = tmean(logsumexp(scaled_logits(params, Tensor(data_batch)), axis=1)) - \
        tmean(logsumexp(scaled_logits(params, Tensor(model_batch)), axis=1))
    return collect_grads(obj, params.parameters())
