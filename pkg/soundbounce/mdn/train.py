"""Fit a mixture density network to (x, theta) pairs."""

from typing import Literal, Optional, Sequence, Tuple

import numpy as np
import torch
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator
from tqdm import tqdm

from .. import constants
from ..errors import RejectedInputError
from .executor import Executor
from .model import ACTIVATION_CLASSES, MdnModel, nll_loss
from .train_utils import init_loaders, init_optimizer, set_all_random_seed


class MdnTrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_components: int = Field(default=constants.MDN_COMPONENTS, ge=1)
    hidden_sizes: Tuple[int, ...] = constants.MDN_HIDDEN_SIZES
    activation: str = constants.MDN_ACTIVATION
    optimizer: Literal["sgd", "adam", "adamw"] = "sgd"
    learning_rate: float = Field(default=constants.MDN_LEARNING_RATE, gt=0.0)
    momentum: float = Field(default=constants.MDN_MOMENTUM, ge=0.0, lt=1.0)
    epochs: int = Field(default=constants.MDN_EPOCHS, ge=1)
    batch_size: int = Field(default=constants.MDN_BATCH_SIZE, ge=1)
    grad_clip: Optional[float] = Field(default=constants.MDN_GRAD_CLIP, gt=0.0)
    variance_floor: float = Field(default=constants.MDN_VARIANCE_FLOOR, gt=0.0)
    cv_fraction: float = Field(default=0.1, ge=0.0, lt=1.0)
    seed: int = 0
    progress: bool = False

    @field_validator("activation")
    @classmethod
    def _known_activation(cls, value: str) -> str:
        if value not in ACTIVATION_CLASSES:
            raise ValueError(f"activation must be one of {sorted(ACTIVATION_CLASSES)}")
        return value


@torch.no_grad()
def dataset_nll(model: MdnModel, x: np.ndarray, theta: np.ndarray) -> float:
    model.eval()
    return float(nll_loss(model, torch.from_numpy(x), torch.from_numpy(theta)))


def train(
    x: np.ndarray,
    theta: np.ndarray,
    config: Optional[MdnTrainConfig] = None,
    input_names: Optional[Sequence[str]] = None,
    target_names: Optional[Sequence[str]] = None,
) -> MdnModel:
    """Train q(theta | x) by minibatch gradient descent on the negative log-likelihood.

    The returned model carries `curve` (one dict per epoch) and `provenance`
    (training config plus initial and final full-dataset NLL).

    Raises:
        RejectedInputError: dataset smaller than the batch size or non-finite values
        TrainingDivergedError: the loss became NaN or infinite
    """
    config = config or MdnTrainConfig()
    x = np.ascontiguousarray(np.asarray(x, dtype=float))
    theta = np.ascontiguousarray(np.asarray(theta, dtype=float))
    if x.ndim == 1:
        x = x[:, None]
    if theta.ndim == 1:
        theta = theta[:, None]
    if x.shape[0] != theta.shape[0]:
        raise RejectedInputError(f"{x.shape[0]} inputs but {theta.shape[0]} targets")
    if x.shape[0] < config.batch_size:
        raise RejectedInputError(f"dataset of {x.shape[0]} is smaller than batch size {config.batch_size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(theta))):
        raise RejectedInputError("training data must be finite")

    set_all_random_seed(config.seed)
    model = MdnModel(
        x.shape[1],
        theta.shape[1],
        n_components=config.n_components,
        hidden_sizes=config.hidden_sizes,
        activation=config.activation,
        variance_floor=config.variance_floor,
        input_names=input_names,
        target_names=target_names,
    )
    model.set_normalization(x, theta)
    optimizer = init_optimizer(config.optimizer, model, config.learning_rate, config.momentum)
    train_loader, cv_loader = init_loaders(x, theta, config.batch_size, config.cv_fraction, config.seed)

    initial_nll = dataset_nll(model, x, theta)
    executor = Executor(grad_clip=config.grad_clip)
    curve = []
    for _ in tqdm(range(config.epochs), desc="mdn", disable=not config.progress):
        info_dict = {}
        executor.train_one_epoch(model, optimizer, train_loader, info_dict)
        executor.cv(model, cv_loader, info_dict)
        curve.append(info_dict)
    final_nll = dataset_nll(model, x, theta)

    if final_nll > initial_nll:
        logger.warning(f"final NLL {final_nll:.4f} exceeds initial NLL {initial_nll:.4f}; run flagged")
    logger.info(
        f"Trained MDN on {x.shape[0]} pairs for {config.epochs} epochs: "
        f"NLL {initial_nll:.4f} -> {final_nll:.4f}"
    )
    model.curve = curve
    model.provenance = {
        "config": config.model_dump(mode="json"),
        "n_examples": int(x.shape[0]),
        "initial_nll": initial_nll,
        "final_nll": final_nll,
        "flagged": bool(final_nll > initial_nll),
    }
    model.eval()
    return model
