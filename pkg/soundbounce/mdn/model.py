"""Mixture density network q(theta | x) with standardization baked in."""

import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn

from .. import constants
from ..errors import RejectedInputError
from .mixture import MixtureOfGaussians

ACTIVATION_CLASSES = {
    "tanh": nn.Tanh,
    "relu": nn.ReLU,
    "elu": nn.ELU,
    "gelu": nn.GELU,
    "swish": nn.SiLU,
}

LOG_2PI = math.log(2.0 * math.pi)
LOG_VAR_LIMIT = 30.0


class MdnModel(nn.Module):
    """Feed-forward trunk with softmax weight, mean and log-variance heads.

    Inputs and targets are standardized with statistics stored as buffers, so the
    module maps raw feature vectors to mixtures in target units.
    """

    def __init__(
        self,
        input_dim: int,
        target_dim: int,
        n_components: int = constants.MDN_COMPONENTS,
        hidden_sizes: Sequence[int] = constants.MDN_HIDDEN_SIZES,
        activation: str = constants.MDN_ACTIVATION,
        variance_floor: float = constants.MDN_VARIANCE_FLOOR,
        input_names: Optional[Sequence[str]] = None,
        target_names: Optional[Sequence[str]] = None,
    ):
        super().__init__()
        if n_components < 1:
            raise RejectedInputError(f"n_components must be >= 1, got {n_components}")
        if activation not in ACTIVATION_CLASSES:
            raise RejectedInputError(f"unknown activation '{activation}'")
        self.input_dim = input_dim
        self.target_dim = target_dim
        self.n_components = n_components
        self.hidden_sizes = tuple(int(h) for h in hidden_sizes)
        self.activation = activation
        self.variance_floor = float(variance_floor)
        self.input_names = list(input_names) if input_names else [f"x{i}" for i in range(input_dim)]
        self.target_names = list(target_names) if target_names else [f"y{i}" for i in range(target_dim)]
        self.provenance: Dict = {}
        self.curve: List[Dict] = []

        layers: List[nn.Module] = []
        width = input_dim
        for hidden in self.hidden_sizes:
            layers += [nn.Linear(width, hidden), ACTIVATION_CLASSES[activation]()]
            width = hidden
        self.trunk = nn.Sequential(*layers)
        self.logits = nn.Linear(width, n_components)
        self.means = nn.Linear(width, n_components * target_dim)
        self.log_vars = nn.Linear(width, n_components * target_dim)

        self.register_buffer("x_mean", torch.zeros(input_dim))
        self.register_buffer("x_std", torch.ones(input_dim))
        self.register_buffer("x_min", torch.full((input_dim,), -math.inf))
        self.register_buffer("x_max", torch.full((input_dim,), math.inf))
        self.register_buffer("y_mean", torch.zeros(target_dim))
        self.register_buffer("y_std", torch.ones(target_dim))
        self.double()

    def architecture(self) -> Dict:
        return {
            "input_dim": self.input_dim,
            "target_dim": self.target_dim,
            "n_components": self.n_components,
            "hidden_sizes": list(self.hidden_sizes),
            "activation": self.activation,
            "variance_floor": self.variance_floor,
            "input_names": self.input_names,
            "target_names": self.target_names,
        }

    @torch.no_grad()
    def set_normalization(self, x: np.ndarray, y: np.ndarray) -> None:
        """Store standardization statistics and the training-feature bounding box."""
        x = np.asarray(x, dtype=float).reshape(-1, self.input_dim)
        y = np.asarray(y, dtype=float).reshape(-1, self.target_dim)
        x_std = x.std(axis=0)
        y_std = y.std(axis=0)
        self.x_mean.copy_(torch.from_numpy(x.mean(axis=0)))
        self.x_std.copy_(torch.from_numpy(np.where(x_std < 1e-8, 1.0, x_std)))
        self.x_min.copy_(torch.from_numpy(x.min(axis=0)))
        self.x_max.copy_(torch.from_numpy(x.max(axis=0)))
        self.y_mean.copy_(torch.from_numpy(y.mean(axis=0)))
        self.y_std.copy_(torch.from_numpy(np.where(y_std < 1e-8, 1.0, y_std)))

    @torch.no_grad()
    def zero_output_layer(self) -> None:
        for head in (self.logits, self.means, self.log_vars):
            head.weight.zero_()
            head.bias.zero_()

    def forward(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Mixture parameters in standardized target space.

        Returns:
            log_weights (B, K), means (B, K, D), variances (B, K, D)
        """
        h = self.trunk((x - self.x_mean) / self.x_std)
        log_weights = torch.log_softmax(self.logits(h), dim=-1)
        means = self.means(h).view(-1, self.n_components, self.target_dim)
        log_vars = self.log_vars(h).clamp(-LOG_VAR_LIMIT, LOG_VAR_LIMIT)
        variances = torch.exp(log_vars).view(-1, self.n_components, self.target_dim) + self.variance_floor
        return log_weights, means, variances

    def _as_tensor(self, x) -> torch.Tensor:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[-1] != self.input_dim:
            raise RejectedInputError(f"expected {self.input_dim} input features, got {x.shape[-1]}")
        if not np.all(np.isfinite(x)):
            raise RejectedInputError("input features must be finite")
        return torch.from_numpy(np.ascontiguousarray(x))

    @torch.no_grad()
    def mixture_arrays(self, x) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Batched mixtures in target units: weights (B,K), means (B,K,D), variances (B,K,D)."""
        log_weights, means, variances = self(self._as_tensor(x))
        weights = torch.softmax(log_weights, dim=-1)
        means = means * self.y_std + self.y_mean
        variances = variances * self.y_std**2
        return weights.numpy(), means.numpy(), variances.numpy()

    def outside_training_hull(self, x) -> bool:
        x = np.asarray(x, dtype=float).reshape(-1, self.input_dim)
        lo, hi = self.x_min.numpy(), self.x_max.numpy()
        return bool(np.any((x < lo) | (x > hi)))

    def mixture(self, x) -> MixtureOfGaussians:
        weights, means, variances = self.mixture_arrays(x)
        return MixtureOfGaussians(weights[0] / weights[0].sum(), means[0], variances[0])


def mdn_forward(model: MdnModel, x) -> MixtureOfGaussians:
    """Conditional density q(theta | x) for one feature vector."""
    return model.mixture(x)


def nll_loss(model: MdnModel, x, theta) -> torch.Tensor:
    """Mean negative log-likelihood of theta under q(theta | x), in target units."""
    x = torch.as_tensor(x, dtype=torch.float64)
    theta = torch.as_tensor(theta, dtype=torch.float64).reshape(-1, model.target_dim)
    if x.shape[0] == 0:
        raise RejectedInputError("nll_loss needs a non-empty batch")
    log_weights, means, variances = model(x.reshape(-1, model.input_dim))
    y = ((theta - model.y_mean) / model.y_std)[:, None, :]
    log_components = -0.5 * (((y - means) ** 2) / variances + torch.log(variances) + LOG_2PI).sum(-1)
    log_prob = torch.logsumexp(log_weights + log_components, dim=-1) - torch.log(model.y_std).sum()
    return -log_prob.mean()
