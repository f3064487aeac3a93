import numpy as np
import pytest

from dpattack.oracle import OracleHandle, TrainSpec, make_synthetic_dataset, train_builtin


@pytest.fixture(scope="session")
def victim_spec():
    return TrainSpec()


@pytest.fixture(scope="session")
def victim(victim_spec):
    return train_builtin(victim_spec, seed=7)


@pytest.fixture(scope="session")
def test_images(victim_spec):
    xs, ys = make_synthetic_dataset(victim_spec, seed=999)
    return xs, ys


class ScriptedOracle:
    """Returns labels from a fixed adversarial-flag script, in call order."""

    def __init__(self, flags, y=0):
        self.flags = list(flags)
        self.y = y
        self.calls = 0

    def predict(self, img):
        flag = self.flags[self.calls] if self.calls < len(self.flags) else False
        self.calls += 1
        return self.y + 1 if flag else self.y


def scripted_handle(flags, x, y=0, max_queries=None):
    oracle = ScriptedOracle(flags, y)
    handle = OracleHandle(oracle.predict, max_queries=max_queries, tracing=True)
    handle.bind_target(x, y)
    return handle, oracle


class BoundaryOracle:
    """Adversarial iff the probed magnitude reaches g(direction).

    Assumes probes of the form clip(x + r*d) with x interior and r small
    enough that no clipping occurs, so (r, d) are recoverable from the
    query image.
    """

    def __init__(self, x, g_fn, y=0):
        self.x = np.asarray(x, dtype=np.float64)
        self.g_fn = g_fn
        self.y = y

    def predict(self, img):
        delta = img - self.x
        r = float(np.abs(delta).max())
        if r == 0.0:
            return self.y
        direction = np.where(delta < 0, -1, 1).astype(np.int8)
        return self.y + 1 if r >= self.g_fn(direction) - 1e-12 else self.y


def boundary_handle(x, g_fn, y=0, max_queries=None):
    oracle = BoundaryOracle(x, g_fn, y)
    handle = OracleHandle(oracle.predict, max_queries=max_queries, tracing=True)
    handle.bind_target(x, y)
    return handle
