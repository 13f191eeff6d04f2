"""GEDI: joint energy-based generative and self-supervised discriminative training.

A single backbone is trained so that its class logits define both a cluster
predictor (softmax over logits/tau) and an unnormalized density
(E(x) = -logsumexp(logits/tau)). The package provides the autodiff engine,
model, SGLD sampler, objectives, trainer, evaluation metrics, a CLI, and an
sklearn-style estimator facade.
"""

from .autodiff import Tensor, backward, grad_wrt_input
from .nn import ModelParams, init_model, encode, logits, predict, energy
from .objectives import LossWeights, loss_inv, loss_prior, loss_gen_surrogate, semantic_prob, loss_nesy
from .sampler import SgldConfig, ReplayBuffer, sgld_chain, sample_with_buffer, generative_grad
from .estimator import GediClustering

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "backward",
    "grad_wrt_input",
    "ModelParams",
    "init_model",
    "encode",
    "logits",
    "predict",
    "energy",
    "LossWeights",
    "loss_inv",
    "loss_prior",
    "loss_gen_surrogate",
    "semantic_prob",
    "loss_nesy",
    "SgldConfig",
    "ReplayBuffer",
    "sgld_chain",
    "sample_with_buffer",
    "generative_grad",
    "GediClustering",
    "__version__",
]
