import math
from typing import Dict, Optional

import torch
from loguru import logger
from torch.utils.data import DataLoader

from ..errors import TrainingDivergedError
from .model import MdnModel, nll_loss
from .train_utils import clip_and_step, log_per_epoch


class Executor:
    """Runs epochs over a loader and keeps the step/epoch counters."""

    def __init__(self, grad_clip: Optional[float] = None):
        self.grad_clip = grad_clip
        self.step = 0
        self.epoch = 0

    def train_one_epoch(self, model: MdnModel, optimizer, train_loader: DataLoader, info_dict: Dict) -> float:
        """Train one epoch and return the sample-weighted mean NLL over it."""
        model.train()
        total, count = 0.0, 0
        for x, theta in train_loader:
            optimizer.zero_grad()
            loss = nll_loss(model, x, theta)
            if not torch.isfinite(loss):
                logger.error(f"loss became {loss.item()} at epoch {self.epoch} step {self.step}")
                raise TrainingDivergedError(self.epoch)
            loss.backward()
            clip_and_step(model, optimizer, self.grad_clip)
            total += loss.item() * x.shape[0]
            count += x.shape[0]
            self.step += 1

        info_dict["epoch"] = self.epoch
        info_dict["step"] = self.step
        info_dict["train_nll"] = total / max(count, 1)
        info_dict["lr"] = optimizer.param_groups[0]["lr"]
        return info_dict["train_nll"]

    @torch.inference_mode()
    def cv(self, model: MdnModel, cv_loader: Optional[DataLoader], info_dict: Dict) -> float:
        """Held-out NLL; NaN when there is no held-out split."""
        model.eval()
        total, count = 0.0, 0
        if cv_loader is not None:
            for x, theta in cv_loader:
                total += nll_loss(model, x, theta).item() * x.shape[0]
                count += x.shape[0]
        info_dict["cv_nll"] = total / count if count else math.nan
        log_per_epoch(info_dict)
        self.epoch += 1
        return info_dict["cv_nll"]
