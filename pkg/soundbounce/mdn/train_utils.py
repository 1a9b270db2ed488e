import json
import random
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import torch
from loguru import logger
from torch.nn.utils import clip_grad_norm_, parameters_to_vector, vector_to_parameters
from torch.utils.data import DataLoader, TensorDataset

from ..errors import RejectedInputError
from .model import MdnModel

CHECKPOINT_FORMAT = "soundbounce-mdn/1"
NORMALIZATION_BUFFERS = ("x_mean", "x_std", "x_min", "x_max", "y_mean", "y_std")
CURVE_COLUMNS = ["epoch", "train_nll", "cv_nll", "lr"]


def set_all_random_seed(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def init_optimizer(name: str, model: MdnModel, lr: float, momentum: float = 0.0) -> torch.optim.Optimizer:
    if name == "sgd":
        return torch.optim.SGD(model.parameters(), lr=lr, momentum=momentum)
    if name == "adam":
        return torch.optim.Adam(model.parameters(), lr=lr)
    if name == "adamw":
        return torch.optim.AdamW(model.parameters(), lr=lr)
    raise RejectedInputError(f"unknown optimizer {name}")


def init_loaders(
    x: np.ndarray, theta: np.ndarray, batch_size: int, cv_fraction: float, seed: int
) -> Tuple[DataLoader, Optional[DataLoader]]:
    """Split off a held-out tail (after a seeded permutation) and wrap both parts in loaders."""
    n = x.shape[0]
    order = np.random.default_rng(seed).permutation(n)
    n_cv = int(round(n * cv_fraction))
    if n - n_cv < batch_size:
        n_cv = max(n - batch_size, 0)
    train_idx, cv_idx = order[: n - n_cv], order[n - n_cv :]

    def _tensors(idx):
        return TensorDataset(torch.from_numpy(x[idx]), torch.from_numpy(theta[idx]))

    generator = torch.Generator().manual_seed(seed)
    train_loader = DataLoader(_tensors(train_idx), batch_size=batch_size, shuffle=True, generator=generator)
    cv_loader = DataLoader(_tensors(cv_idx), batch_size=max(batch_size, 1024)) if n_cv else None
    return train_loader, cv_loader


def clip_and_step(model: MdnModel, optimizer: torch.optim.Optimizer, grad_clip: Optional[float]) -> float:
    grad_norm = float("nan")
    if grad_clip:
        grad_norm = float(clip_grad_norm_(model.parameters(), grad_clip))
    optimizer.step()
    return grad_norm


def log_per_epoch(info_dict: Dict) -> None:
    logger.debug(
        f"Epoch {info_dict['epoch']} step {info_dict['step']} "
        f"train_nll {info_dict['train_nll']:.6f} cv_nll {info_dict['cv_nll']:.6f} lr {info_dict['lr']:.2e}"
    )


def save_checkpoint(model: MdnModel, path: Union[str, Path], info_dict: Optional[Dict] = None) -> Path:
    """Write architecture, flat parameter vector and normalization stats as JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with torch.no_grad():
        flat = parameters_to_vector(model.parameters()).tolist()
    payload = {
        "format": CHECKPOINT_FORMAT,
        "architecture": model.architecture(),
        "parameters": flat,
        "normalization": {name: getattr(model, name).tolist() for name in NORMALIZATION_BUFFERS},
        "provenance": getattr(model, "provenance", {}),
        "info": {k: v for k, v in (info_dict or {}).items() if isinstance(v, (int, float, str, bool))},
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    logger.info(f"Checkpoint: saved {len(flat)} parameters to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> MdnModel:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise RejectedInputError(f"{path} is not a soundbounce MDN checkpoint")
    model = MdnModel(**payload["architecture"])
    flat = torch.tensor(payload["parameters"], dtype=torch.float64)
    expected = sum(p.numel() for p in model.parameters())
    if flat.numel() != expected:
        raise RejectedInputError(f"checkpoint holds {flat.numel()} parameters, architecture needs {expected}")
    with torch.no_grad():
        vector_to_parameters(flat, model.parameters())
        for name in NORMALIZATION_BUFFERS:
            getattr(model, name).copy_(torch.tensor(payload["normalization"][name], dtype=torch.float64))
    model.provenance = payload.get("provenance", {})
    model.eval()
    logger.info(f"Checkpoint: loaded {path}")
    return model


def write_training_curve(curve: List[Dict], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(curve, columns=CURVE_COLUMNS).to_csv(path, index=False)
    return path
