from .architecture import VARIANTS, VaeArchitecture
from .dnn import DNNClassifier
from .losses import (
    LossBreakdown,
    LossWeights,
    ReconstructionHeads,
    VaeOutput,
    bernoulli_nll,
    gaussian_nll,
    kl_loss,
    reconstruction_error,
    vae_err_loss,
    vae_md_loss,
    vae_prob_loss,
    vae_sl_loss,
)
from .training import TrainHistory, train
from .vae import VAE, reparameterize

__all__ = [
    "DNNClassifier",
    "LossBreakdown",
    "LossWeights",
    "ReconstructionHeads",
    "TrainHistory",
    "VAE",
    "VARIANTS",
    "VaeArchitecture",
    "VaeOutput",
    "bernoulli_nll",
    "gaussian_nll",
    "kl_loss",
    "reconstruction_error",
    "reparameterize",
    "train",
    "vae_err_loss",
    "vae_md_loss",
    "vae_prob_loss",
    "vae_sl_loss",
]
