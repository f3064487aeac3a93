"""Model backends for the prediction endpoint.

Every backend exposes exactly one inference surface: predict(array) ->
int label. Preprocessing (resizing, normalization) happens here, so
clients always speak raw [0, 1] pixel tensors of the declared shape.
"""

import json
import threading

import numpy as np


class ScriptExhausted(Exception):
    """Fixture script has no labels left."""


class BuiltinNpzModel:
    """Serves the toolkit's .npz victim files (linear / tanh-MLP weights).

    The forward pass is a few matvecs reimplemented here so the server
    depends only on the file format, not on the attack package.
    """

    def __init__(self, path):
        data = np.load(path, allow_pickle=False)
        self.architecture = str(data["architecture"])
        self.shape = tuple(int(s) for s in data["input_shape"].tolist())
        self.classes = int(data["classes"])
        self.weights = {k[2:]: data[k] for k in data.files if k.startswith("w_")}

    def predict(self, x: np.ndarray) -> int:
        xf = np.asarray(x, dtype=np.float64).ravel()
        w = self.weights
        if self.architecture == "linear":
            logits = w["W"] @ xf + w["b"]
        else:
            h = np.tanh(w["W1"] @ xf + w["b1"])
            logits = w["W2"] @ h + w["b2"]
        return int(np.argmax(logits))


class TorchvisionModel:
    """Pretrained torchvision classifier behind the same surface.

    Inputs arrive as [0, 1] RGB tensors of any H x W; they are resized
    and normalized here, matching the usual ImageNet evaluation
    pipeline. Requires torch + torchvision with downloaded weights.
    """

    def __init__(self, name, image_size=224):
        import torch
        import torchvision.models as tvm

        self._torch = torch
        weights_enum = tvm.get_model_weights(name)
        weights = weights_enum.DEFAULT
        self.model = tvm.get_model(name, weights=weights).eval()
        self.shape = (3, image_size, image_size)
        self.classes = len(weights.meta["categories"])
        self._mean = torch.tensor([0.485, 0.456, 0.406]).view(3, 1, 1)
        self._std = torch.tensor([0.229, 0.224, 0.225]).view(3, 1, 1)

    def predict(self, x: np.ndarray) -> int:
        torch = self._torch
        with torch.no_grad():
            t = torch.from_numpy(np.asarray(x, dtype=np.float32))[None]
            if t.shape[-2:] != self.shape[-2:]:
                t = torch.nn.functional.interpolate(
                    t, size=self.shape[-2:], mode="bilinear", align_corners=False
                )
            t = (t - self._mean) / self._std
            return int(self.model(t).argmax(dim=1).item())


class FixtureScript:
    """Returns scripted labels in global FIFO order (lock-serialized)."""

    def __init__(self, labels, shape=(1, 16, 16), classes=None):
        self.labels = [int(v) for v in labels]
        self.shape = tuple(shape)
        self.classes = int(classes) if classes is not None else max(self.labels, default=0) + 1
        self._lock = threading.Lock()
        self._next = 0

    def predict(self, x: np.ndarray) -> int:
        with self._lock:
            if self._next >= len(self.labels):
                raise ScriptExhausted(f"script of {len(self.labels)} labels exhausted")
            label = self.labels[self._next]
            self._next += 1
        return label


def load_fixture(path):
    """labels.json: either a bare list or {"labels": [...], "shape": [...]}."""
    with open(path) as fh:
        obj = json.load(fh)
    if isinstance(obj, list):
        return FixtureScript(obj)
    return FixtureScript(
        obj["labels"], shape=tuple(obj.get("shape", (1, 16, 16))), classes=obj.get("classes")
    )


def load_model(spec):
    """Parse a --model spec: path to .npz, or torchvision:<name>."""
    if spec.startswith("torchvision:"):
        return TorchvisionModel(spec.split(":", 1)[1])
    return BuiltinNpzModel(spec)
