from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from app.basis import OccupationBasis, enumerate_basis
from app.portfolio import DemandModel, InstanceConfig, estimate_model, make_instance
from app.usage import synth_usage


@pytest.fixture
def toy_model() -> DemandModel:
    return estimate_model(synth_usage(11, 6, 30))


@pytest.fixture
def toy_instance() -> InstanceConfig:
    return make_instance(6, 2, 18, 1.0)


@pytest.fixture
def toy_basis() -> OccupationBasis:
    return enumerate_basis(6, 2)


@pytest.fixture
def balanced_instance(toy_model: DemandModel) -> InstanceConfig:
    """Evening instance whose targets equal the uniform-density totals, so HF fields vanish."""
    base = make_instance(6, 2, 18, 1.0)
    targets = base.period_means(toy_model) @ np.full(6, 2 / 6)
    return make_instance(6, 2, 18, targets)


@pytest.fixture
def write_config(tmp_path: Path):
    def _write(text: str, name: str = "run.toml") -> Path:
        path = tmp_path / name
        path.write_text(text)
        return path

    return _write
