"""Wire-protocol acceptance: the attack toolkit runs unchanged against
this server, and scripted decision traces match the in-process runs."""

import threading
import time

import numpy as np
import pytest
import uvicorn

from oracle_server.app import create_app
from oracle_server.models import BuiltinNpzModel, FixtureScript


@pytest.fixture
def serve():
    """Start a real uvicorn server on a free port; yields base URLs."""
    handles = []

    def start(backend):
        config = uvicorn.Config(
            create_app(backend), host="127.0.0.1", port=0, log_level="error"
        )
        server = uvicorn.Server(config)
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        deadline = time.time() + 10
        while not server.started:
            if time.time() > deadline:
                raise RuntimeError("server did not start")
            time.sleep(0.01)
        port = server.servers[0].sockets[0].getsockname()[1]
        handles.append(server)
        return f"http://127.0.0.1:{port}"

    yield start
    for server in handles:
        server.should_exit = True


def scripted_labels(flags, y=0):
    return [y + 1 if f else y for f in flags]


def test_scripted_decision_trace_matches_in_process(serve):
    from dpattack.oracle import OracleHandle
    from dpattack.search import pdo_run

    x = np.full((1, 4, 4), 0.5)
    y = 0
    rng = np.random.default_rng(13)
    flags = [bool(rng.random() < 0.5) for _ in range(64)]

    class Scripted:
        def __init__(self):
            self.i = 0

        def predict(self, img):
            f = flags[self.i] if self.i < len(flags) else False
            self.i += 1
            return y + 1 if f else y

    d0 = np.ones(x.shape, dtype=np.int8)
    local = OracleHandle(Scripted().predict, tracing=True)
    local.bind_target(x, y)
    state_local = pdo_run(local, x, y, d0.copy(), 1.0, budget=48, eps=0.0)

    url = serve(FixtureScript(scripted_labels(flags + [False] * 64), shape=x.shape))
    remote = OracleHandle.from_http(url, tracing=True)
    remote.bind_target(x, y)
    state_remote = pdo_run(remote, x, y, d0.copy(), 1.0, budget=48, eps=0.0)

    assert [(e["q"], e["r"], e.get("case")) for e in local.ledger.trace] == [
        (e["q"], e["r"], e.get("case")) for e in remote.ledger.trace
    ]
    assert [e["case"] for e in state_local.events] == [e["case"] for e in state_remote.events]
    assert np.array_equal(state_local.d_best, state_remote.d_best)
    assert state_local.r == state_remote.r


def test_full_attack_over_the_wire(serve, tmp_path):
    from dpattack.driver import AttackConfig, dpattack
    from dpattack.oracle import OracleHandle, TrainSpec, make_synthetic_dataset, train_builtin

    spec = TrainSpec()
    model = train_builtin(spec, seed=7)
    path = tmp_path / "victim.npz"
    model.save(path)
    url = serve(BuiltinNpzModel(path))

    xs, ys = make_synthetic_dataset(spec, seed=999)
    cfg = AttackConfig(
        norm="linf", eps=0.15, max_queries=120, mode="dyn", block_sizes=(4, 8),
        seed=3, tracing=True,
    )
    handle = OracleHandle.from_http(url, max_queries=cfg.max_queries, tracing=True)
    res = dpattack(handle, xs[0], int(ys[0]), cfg)
    assert res.success
    assert res.queries_used == len(res.trace)
    # the served artifact and the in-process model agree on the result
    local_handle = OracleHandle.from_model(model, max_queries=cfg.max_queries, tracing=True)
    res_local = dpattack(local_handle, xs[0], int(ys[0]), cfg)
    assert res.success == res_local.success
    assert res.queries_used == res_local.queries_used
    assert res.final_r == res_local.final_r
    # replay through the wire: still adversarial
    verify = OracleHandle.from_http(url)
    verify.bind_target(xs[0], int(ys[0]))
    assert verify.is_adversarial(res.adv_image)


def test_health_over_the_wire(serve):
    import requests

    url = serve(FixtureScript([1, 2], shape=(1, 2, 2), classes=4))
    resp = requests.get(f"{url}/v1/health", timeout=5)
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok", "classes": 4, "shape": [1, 2, 2]}
