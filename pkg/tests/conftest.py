import math

import numpy as np
import pytest

from maxloss.core import FunctionalInstance
from maxloss.instances import HardInstance, HardInstanceConfig, make_huber_instance


@pytest.fixture(autouse=True)
def isolated_config(tmp_path, monkeypatch):
    """Every test gets its own config file and no thread override"""
    path = tmp_path / "config.json"
    monkeypatch.setenv("MAXLOSS_CONFIG", str(path))
    monkeypatch.delenv("MAXMIN_THREADS", raising=False)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def huber():
    return make_huber_instance(3, 8, ell=1.0, seed=3)


@pytest.fixture
def hard_small():
    return HardInstance(HardInstanceConfig.create(T=4, N=8, ell=16.0, d=10, seed=1))


def abs_instance(center: float = 0.0) -> FunctionalInstance:
    """1-d f(x) = |x - center|"""
    return FunctionalInstance(
        1,
        [lambda x: abs(float(x[0]) - center)],
        [lambda x: np.array([math.copysign(1.0, float(x[0]) - center) if x[0] != center else 0.0])],
        lip=1.0,
    )


def constant_instance(c: float, n: int = 3, d: int = 2) -> FunctionalInstance:
    return FunctionalInstance(
        d, [lambda x: c] * n, [lambda x: np.zeros(d)] * n, lip=1.0, smooth=0.0
    )


def linear_instance(rows, offsets) -> FunctionalInstance:
    rows = [np.asarray(a, dtype=np.float64) for a in rows]
    return FunctionalInstance(
        rows[0].shape[0],
        [lambda x, a=a, b=b: float(a @ x + b) for a, b in zip(rows, offsets)],
        [lambda x, a=a: a.copy() for a in rows],
        lip=max(float(np.linalg.norm(a)) for a in rows),
        smooth=0.0,
    )
