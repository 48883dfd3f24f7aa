import numpy as np
import pytest

from kacglauber.model import KernelSpec, ModelParams


def two_color(L=32, T=0.5, theta=1.0, d=1, beta=1.0, p=0.5,
              profile="gaussian", width=0.25) -> ModelParams:
    return ModelParams(
        d=d, L=L, theta=theta, T=T, beta=beta,
        colors=((1.0, p), (-1.0, 1.0 - p)),
        kernel=KernelSpec(profile, width),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(987654321)


@pytest.fixture
def params():
    return two_color()
