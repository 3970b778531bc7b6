import math
import textwrap

import numpy as np
import pytest

from app.models.schemas import DomainSpec, ModelParams
from app.spectral.basis import constant_field, zero_field


@pytest.fixture
def small_domain():
    """2 x 2 rectangle with the four lowest modes; mu stays small so fine grids converge fast."""
    return DomainSpec(length_L=2.0, height_H=2.0, modes_M=1, modes_N=1, quad_points=16)


@pytest.fixture
def unit_square():
    return DomainSpec(length_L=1.0, height_H=1.0, modes_M=3, modes_N=3, quad_points=16)


@pytest.fixture
def make_params():
    def _make(domain, rho=0.5, T=1.0, gamma=1.0, x0=None, b=None, cap_R=math.inf, diffusion=1.0):
        return ModelParams(
            rho=rho,
            horizon_T=T,
            gamma=gamma,
            cap_R=cap_R,
            diffusion=diffusion,
            x0=x0 if x0 is not None else zero_field(domain),
            effectiveness_b=b if b is not None else constant_field(domain, 1.0),
        )

    return _make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def write_scenario(tmp_path):
    def _write(text, name="scenario.cfg"):
        path = tmp_path / name
        path.write_text(textwrap.dedent(text).lstrip(), encoding="utf-8")
        return path

    return _write
