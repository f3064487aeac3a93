"""Hard-label oracle with query accounting, plus a built-in victim model.

The oracle handle exposes only top-1 labels to search code. Loss and
gradient accessors live on :class:`BuiltinModel` and are never reachable
through a handle, which is what keeps attack modules hard-label-pure.
"""

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BudgetExhausted,
    CapabilityError,
    OracleUnavailable,
    TrainingFailed,
)
from .tensor import validate_image


@dataclass
class QueryLedger:
    """Counts label queries and optionally records a per-query trace."""

    max_queries: int | None = None
    tracing: bool = False
    total_queries: int = 0
    trace: list = field(default_factory=list)

    def precheck(self):
        if self.max_queries is not None and self.total_queries >= self.max_queries:
            raise BudgetExhausted(f"query budget {self.max_queries} exhausted")

    def charge(self, r=None, adversarial=None, context=None):
        self.precheck()
        self.total_queries += 1
        if self.tracing:
            entry = {"q": self.total_queries, "r": r, "adversarial": adversarial}
            if context:
                entry.update(context)
            self.trace.append(entry)
        return self.total_queries

    @property
    def remaining(self):
        if self.max_queries is None:
            return None
        return self.max_queries - self.total_queries


def _softmax(z):
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _log_softmax(z):
    z = z - z.max()
    return z - np.log(np.exp(z).sum())


class BuiltinModel:
    """Small deterministic classifier (linear or one-hidden-layer tanh MLP).

    Provides exact analytic gradients of the softmax cross-entropy loss
    for the theory-validation suite; attack code never touches these.
    """

    def __init__(self, architecture, weights, input_shape, classes):
        if architecture not in ("linear", "mlp"):
            raise ValueError(f"unknown architecture {architecture!r}")
        self.architecture = architecture
        self.weights = {k: np.asarray(v, dtype=np.float64) for k, v in weights.items()}
        self.input_shape = tuple(int(s) for s in input_shape)
        self.classes = int(classes)

    @property
    def dim(self):
        return int(np.prod(self.input_shape))

    def _logits(self, x_flat):
        w = self.weights
        if self.architecture == "linear":
            return w["W"] @ x_flat + w["b"]
        h = np.tanh(w["W1"] @ x_flat + w["b1"])
        return w["W2"] @ h + w["b2"]

    def predict_label(self, x) -> int:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.input_shape:
            raise ValueError(f"expected input shape {self.input_shape}, got {x.shape}")
        return int(np.argmax(self._logits(x.ravel())))

    def loss_and_grad(self, x, y):
        """Softmax CE loss and its exact gradient w.r.t. the input pixels."""
        x = np.asarray(x, dtype=np.float64)
        xf = x.ravel()
        w = self.weights
        if self.architecture == "linear":
            logits = w["W"] @ xf + w["b"]
            p = _softmax(logits)
            delta = p.copy()
            delta[y] -= 1.0
            grad = w["W"].T @ delta
        else:
            z1 = w["W1"] @ xf + w["b1"]
            h = np.tanh(z1)
            logits = w["W2"] @ h + w["b2"]
            p = _softmax(logits)
            delta = p.copy()
            delta[y] -= 1.0
            grad = w["W1"].T @ ((w["W2"].T @ delta) * (1.0 - h * h))
        loss = -_log_softmax(logits)[y]
        return float(loss), grad.reshape(self.input_shape)

    def save(self, path):
        arrays = {f"w_{k}": v for k, v in self.weights.items()}
        np.savez(
            path,
            architecture=np.array(self.architecture),
            input_shape=np.array(self.input_shape),
            classes=np.array(self.classes),
            **arrays,
        )

    @classmethod
    def load(cls, path):
        data = np.load(path, allow_pickle=False)
        weights = {k[2:]: data[k] for k in data.files if k.startswith("w_")}
        return cls(
            architecture=str(data["architecture"]),
            weights=weights,
            input_shape=tuple(data["input_shape"].tolist()),
            classes=int(data["classes"]),
        )


def loss_and_grad(model: BuiltinModel, x, y):
    """Module-level accessor; raises CapabilityError for non-builtin backends."""
    if not isinstance(model, BuiltinModel):
        raise CapabilityError("loss/gradient access requires a builtin model")
    return model.loss_and_grad(x, y)


@dataclass
class TrainSpec:
    """Architecture and synthetic-dataset configuration for train_builtin."""

    architecture: str = "mlp"
    input_shape: tuple = (1, 16, 16)
    classes: int = 4
    hidden: int = 32
    n_per_class: int = 60
    template_smoothness: float = 3.0
    noise_std: float = 0.08
    iters: int = 400
    lr: float = 0.05


def make_synthetic_dataset(spec: TrainSpec, seed: int):
    """Low-resolution class-blob images: smooth per-class templates + noise.

    Smoothing keeps the class signal in low frequency bands, mirroring
    natural-image statistics at desk scale.
    """
    from scipy.ndimage import gaussian_filter

    rng = np.random.default_rng(seed)
    c, h, w = spec.input_shape
    templates = []
    for _ in range(spec.classes):
        t = rng.normal(size=(c, h, w))
        t = gaussian_filter(t, sigma=(0, spec.template_smoothness, spec.template_smoothness))
        t = (t - t.min()) / (t.max() - t.min() + 1e-12)
        templates.append(0.2 + 0.6 * t)
    xs, ys = [], []
    for k, t in enumerate(templates):
        noise = rng.normal(scale=spec.noise_std, size=(spec.n_per_class, c, h, w))
        noise = gaussian_filter(noise, sigma=(0, 0, 1.0, 1.0))
        xs.append(np.clip(t[None] + noise, 0.0, 1.0))
        ys.append(np.full(spec.n_per_class, k))
    return np.concatenate(xs), np.concatenate(ys)


def train_builtin(spec: TrainSpec, seed: int) -> BuiltinModel:
    """Train a deterministic desk-scale victim on its synthetic dataset."""
    xs, ys = make_synthetic_dataset(spec, seed)
    rng = np.random.default_rng(seed + 1)
    n = xs.shape[0]
    d = int(np.prod(spec.input_shape))
    xf = xs.reshape(n, d)
    onehot = np.eye(spec.classes)[ys]

    if spec.architecture == "linear":
        params = {
            "W": rng.normal(scale=0.01, size=(spec.classes, d)),
            "b": np.zeros(spec.classes),
        }
    elif spec.architecture == "mlp":
        params = {
            "W1": rng.normal(scale=np.sqrt(1.0 / d), size=(spec.hidden, d)),
            "b1": np.zeros(spec.hidden),
            "W2": rng.normal(scale=np.sqrt(1.0 / spec.hidden), size=(spec.classes, spec.hidden)),
            "b2": np.zeros(spec.classes),
        }
    else:
        raise ValueError(f"unknown architecture {spec.architecture!r}")

    # Full-batch Adam on softmax CE.
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(p) for k, p in params.items()}
    b1, b2, eps = 0.9, 0.999, 1e-8
    for t in range(1, spec.iters + 1):
        if spec.architecture == "linear":
            logits = xf @ params["W"].T + params["b"]
        else:
            hpre = xf @ params["W1"].T + params["b1"]
            hact = np.tanh(hpre)
            logits = hact @ params["W2"].T + params["b2"]
        z = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        delta = (p - onehot) / n
        if spec.architecture == "linear":
            grads = {"W": delta.T @ xf, "b": delta.sum(axis=0)}
        else:
            dh = (delta @ params["W2"]) * (1.0 - hact * hact)
            grads = {
                "W1": dh.T @ xf,
                "b1": dh.sum(axis=0),
                "W2": delta.T @ hact,
                "b2": delta.sum(axis=0),
            }
        for k, g in grads.items():
            m[k] = b1 * m[k] + (1 - b1) * g
            v[k] = b2 * v[k] + (1 - b2) * g * g
            mhat = m[k] / (1 - b1**t)
            vhat = v[k] / (1 - b2**t)
            params[k] -= spec.lr * mhat / (np.sqrt(vhat) + eps)

    model = BuiltinModel(spec.architecture, params, spec.input_shape, spec.classes)
    preds = np.array([model.predict_label(x) for x in xs])
    acc = float(np.mean(preds == ys))
    if acc < 0.9:
        raise TrainingFailed(f"train accuracy {acc:.3f} below 0.9 gate")
    if not np.isfinite(logits).all():
        raise TrainingFailed("training diverged to non-finite logits")
    return model


class HttpOracle:
    """Client for the remote prediction endpoint (POST /v1/predict)."""

    def __init__(self, url, timeout_ms=None, retries=3):
        self.url = url.rstrip("/")
        if timeout_ms is None:
            timeout_ms = int(os.environ.get("ORACLE_TIMEOUT_MS", "10000"))
        self.timeout = timeout_ms / 1000.0
        self.retries = retries

    def health(self):
        import requests

        try:
            resp = requests.get(f"{self.url}/v1/health", timeout=self.timeout)
        except requests.RequestException as exc:
            raise OracleUnavailable(f"health check failed: {exc}") from exc
        if resp.status_code != 200:
            raise OracleUnavailable(f"health check returned {resp.status_code}")
        return resp.json()

    def predict_label(self, x) -> int:
        import requests

        body = json.dumps(
            {"shape": list(x.shape), "data": np.asarray(x, dtype=np.float64).ravel().tolist()}
        )
        last = None
        # Retries do not touch the ledger: only a delivered label counts.
        for attempt in range(self.retries):
            try:
                resp = requests.post(
                    f"{self.url}/v1/predict",
                    data=body,
                    headers={"Content-Type": "application/json"},
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last = exc
                time.sleep(0.1 * (2**attempt))
                continue
            if resp.status_code != 200:
                raise OracleUnavailable(f"oracle returned status {resp.status_code}")
            return int(resp.json()["label"])
        raise OracleUnavailable(f"oracle transport failed after retries: {last}")


class OracleHandle:
    """Hard-label query interface bound to one attack instance.

    Only top-1 labels flow through this object. `context` tags the next
    trace entries with engine metadata (case, level) for decision audits.
    """

    def __init__(self, predict_fn, max_queries=None, tracing=False, backend="builtin"):
        self._predict = predict_fn
        self.backend = backend
        self.ledger = QueryLedger(max_queries=max_queries, tracing=tracing)
        self.target_x = None
        self.target_y = None
        self.context = None

    @classmethod
    def from_model(cls, model: BuiltinModel, max_queries=None, tracing=False):
        return cls(model.predict_label, max_queries, tracing, backend="builtin")

    @classmethod
    def from_http(cls, url, max_queries=None, tracing=False, timeout_ms=None):
        client = HttpOracle(url, timeout_ms=timeout_ms)
        return cls(client.predict_label, max_queries, tracing, backend="http")

    def bind_target(self, x, y):
        self.target_x = validate_image(x)
        self.target_y = int(y)

    def query_label(self, x, r=None) -> int:
        # budget refusal happens before the call; the ledger only counts
        # queries whose label was actually delivered
        self.ledger.precheck()
        label = int(self._predict(np.asarray(x, dtype=np.float64)))
        adv = (label != self.target_y) if self.target_y is not None else None
        self.ledger.charge(r=r, adversarial=adv, context=self.context)
        return label

    def is_adversarial(self, x_adv, r=None) -> bool:
        if self.target_y is None:
            raise ValueError("bind_target must be called before is_adversarial")
        return self.query_label(x_adv, r=r) != self.target_y
