import os
import sys
from pathlib import Path

import pytest

# Add the project root directory to Python path
project_root = str(Path(__file__).parent.parent)
sys.path.insert(0, project_root)

from src.crossmodal import ArchConfig, CurriculumSchedule, train_anchor  # noqa: E402
from src.netcore import RngState  # noqa: E402
from src.synthdata import DataSpec, ModalitySpec, generate_dataset  # noqa: E402


@pytest.fixture
def tiny_spec():
    """Four classes, three modalities; the text modality has its own input size"""
    return DataSpec(
        n_classes=4,
        latent_dim=6,
        n_parts=4,
        train_per_class=20,
        val_per_class=6,
        anchor="natural",
        modalities=[
            ModalitySpec(name="natural", rendered_dim=12, distractor_dims=2, nonlinearity="tanh"),
            ModalitySpec(name="sketch", rendered_dim=12, distractor_dims=2, nonlinearity="relu"),
            ModalitySpec(name="text", rendered_dim=8, distractor_dims=2, nonlinearity="sign",
                         noise_std=0.2),
        ],
    )


@pytest.fixture
def tiny_dataset(tiny_spec):
    return generate_dataset(tiny_spec, seed=0)


@pytest.fixture
def tiny_arch():
    return ArchConfig(shared_dim=8, hidden_dim=8, encoder_width=10, encoder_layers=2)


@pytest.fixture
def tiny_schedule():
    return CurriculumSchedule(total_iters=20, freeze_iters=10, lr=0.05, batch_size=16)


@pytest.fixture
def tiny_anchor(tiny_dataset, tiny_arch):
    schedule = CurriculumSchedule(total_iters=150, freeze_iters=0, lr=0.05, batch_size=16)
    return train_anchor(tiny_dataset, tiny_arch, schedule, RngState(0).child("anchor"))


@pytest.fixture
def no_thread_env(monkeypatch):
    monkeypatch.delenv("XMODAL_THREADS", raising=False)
    monkeypatch.delenv("XMODAL_CONFIG", raising=False)
    return os.environ
