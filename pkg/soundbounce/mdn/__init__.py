from .mixture import (
    GaussianD,
    MixtureOfGaussians,
    mixture_mode,
    multiply_gaussians,
    project_to_gaussian,
    sample_batched_mixture,
    sample_mixture,
)
from .model import ACTIVATION_CLASSES, MdnModel, mdn_forward, nll_loss
from .train import MdnTrainConfig, dataset_nll, train
from .train_utils import load_checkpoint, save_checkpoint, write_training_curve

__all__ = [
    "ACTIVATION_CLASSES",
    "GaussianD",
    "MdnModel",
    "MdnTrainConfig",
    "MixtureOfGaussians",
    "dataset_nll",
    "load_checkpoint",
    "mdn_forward",
    "mixture_mode",
    "multiply_gaussians",
    "nll_loss",
    "project_to_gaussian",
    "sample_batched_mixture",
    "sample_mixture",
    "save_checkpoint",
    "train",
    "write_training_curve",
]
