import numpy as np
import pytest
import torch

from soundbounce.dynamics import TransitionModel
from soundbounce.mdn import MdnModel, MdnTrainConfig
from soundbounce.physics import BounceEvent, SimParams
from soundbounce.tracking import RobotPlane


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def noiseless_params():
    return SimParams(e=0.8, log10_kappa=9.0)


@pytest.fixture
def plane():
    return RobotPlane()


@pytest.fixture
def small_model():
    """Tiny untrained network with unit normalization."""
    model = MdnModel(input_dim=2, target_dim=1, n_components=2, hidden_sizes=(5,), activation="tanh")
    return model


@pytest.fixture
def fast_train_config():
    return MdnTrainConfig(
        n_components=2,
        hidden_sizes=(16, 16),
        optimizer="adam",
        learning_rate=1e-2,
        epochs=60,
        batch_size=64,
        seed=0,
    )


def bounces(*rows):
    """BounceEvents from (t, x, y) tuples."""
    return [BounceEvent(t, np.array([x, y])) for t, x, y in rows]


def constant_transition_model(
    t_next=0.2, d_next=0.1, alpha_next=0.0, spread=1e-4, n_components=1, hidden_sizes=(4,)
):
    """Transition model whose output ignores its input: every flight is (t_next, d_next, alpha_next)."""
    model = MdnModel(input_dim=2, target_dim=3, n_components=n_components, hidden_sizes=hidden_sizes)
    model.zero_output_layer()
    with torch.no_grad():
        model.y_mean.copy_(torch.tensor([t_next, d_next, alpha_next], dtype=torch.float64))
        model.y_std.fill_(spread)
    model.eval()
    return TransitionModel(model)


@pytest.fixture
def straight_transition():
    return constant_transition_model()
