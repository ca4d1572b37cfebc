"""Classifier with an optional temporal transformer in front of it."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .ttn import PREFIX as TTN_PREFIX
from .ttn import TTNConfig, init_ttn, ttn_backward_batch, ttn_forward_batch
from .warp import ShapeError

CLS_PREFIX = "cls."


@dataclass
class ClassifierConfig:
    """Conv feature maps ``(maps, kernel)`` then hidden dense sizes then logits.

    The defaults (no hidden layers) give a single fully connected layer.
    """

    num_classes: int = 2
    conv_layers: list = field(default_factory=list)
    fc_layers: list = field(default_factory=list)
    activation: str = "relu"

    def __post_init__(self):
        self.conv_layers = [tuple(int(v) for v in c) for c in self.conv_layers]
        self.fc_layers = [int(h) for h in self.fc_layers]

    def stack(self, T: int, N: int) -> nn.StackSpec:
        return nn.StackSpec(T, N, self.conv_layers, self.fc_layers, self.num_classes,
                            self.activation)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_layers"] = [list(c) for c in self.conv_layers]
        return d


@dataclass
class Model:
    T: int
    N: int
    classifier: ClassifierConfig
    ttn: TTNConfig | None
    params: dict

    @property
    def cls_stack(self) -> nn.StackSpec:
        return self.classifier.stack(self.T, self.N)

    def param_groups(self, ttn_ratio: float) -> dict:
        return {k: (ttn_ratio if k.startswith(TTN_PREFIX) else 1.0) for k in self.params}

    def _check(self, X):
        if X.ndim != 3 or X.shape[1:] != (self.T, self.N):
            raise ShapeError(f"model expects (B, {self.T}, {self.N}), got {X.shape}")

    def forward(self, X: np.ndarray):
        """Returns ``(logits, features, cache)``; ``features`` feed the output layer."""
        self._check(X)
        ttn_cache = None
        if self.ttn is not None:
            X, _, _, ttn_cache = ttn_forward_batch(X, self.ttn, self.params)
        logits, feats, cls_cache = nn.stack_forward(self.cls_stack, self.params, X, CLS_PREFIX)
        return logits, feats, (ttn_cache, cls_cache)

    def warp(self, X: np.ndarray):
        """TTN outputs ``(warped, gamma, v)``; identity when there is no TTN."""
        self._check(X)
        if self.ttn is None:
            B = X.shape[0]
            gamma = np.broadcast_to(np.arange(self.T, dtype=np.float64), (B, self.T)).copy()
            return X.copy(), gamma, np.zeros((B, self.T))
        Y, gamma, v, _ = ttn_forward_batch(X, self.ttn, self.params)
        v = v.copy()
        v[:, 0] = 0.0
        return Y, gamma, v

    def loss_and_grads(self, X: np.ndarray, y: np.ndarray, need_dx: bool = False):
        """Mean cross-entropy and parameter gradients (plus ``dX`` if asked)."""
        logits, _, (ttn_cache, cls_cache) = self.forward(X)
        loss, dlogits = nn.softmax_cross_entropy(logits, y)
        want_cls_dx = self.ttn is not None or need_dx
        dX, grads = nn.stack_backward(self.cls_stack, self.params, cls_cache, dlogits,
                                      CLS_PREFIX, need_dx=want_cls_dx)
        if self.ttn is not None:
            dX, ttn_grads = ttn_backward_batch(dX, self.ttn, self.params, ttn_cache,
                                               need_dx=need_dx)
            grads.update(ttn_grads)
        return loss, grads, dX

    def predict_logits(self, X: np.ndarray, batch: int = 500) -> np.ndarray:
        return np.concatenate([self.forward(X[i:i + batch])[0]
                               for i in range(0, X.shape[0], batch)])

    def features(self, X: np.ndarray, batch: int = 500) -> np.ndarray:
        return np.concatenate([self.forward(X[i:i + batch])[1]
                               for i in range(0, X.shape[0], batch)])

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax picks the lowest index on ties
        return np.argmax(self.predict_logits(X), axis=1)

    def architecture(self) -> dict:
        return {
            "T": self.T,
            "N": self.N,
            "classifier": self.classifier.to_dict(),
            "ttn": None if self.ttn is None else self.ttn.to_dict(),
        }

    @classmethod
    def from_architecture(cls, arch: dict, params: dict) -> "Model":
        ttn = None if arch.get("ttn") is None else TTNConfig.from_dict(arch["ttn"])
        model = cls(int(arch["T"]), int(arch["N"]), ClassifierConfig(**arch["classifier"]),
                    ttn, {})
        expected = model.expected_shapes()
        if set(expected) != set(params):
            missing = sorted(set(expected) - set(params))
            extra = sorted(set(params) - set(expected))
            raise ShapeError(f"checkpoint parameters do not match model: missing {missing}, "
                             f"unexpected {extra}")
        for name, shape in expected.items():
            if tuple(params[name].shape) != tuple(shape):
                raise ShapeError(f"parameter {name}: checkpoint shape {params[name].shape}, "
                                 f"model expects {shape}")
        model.params = {name: np.array(params[name], dtype=np.float64) for name in expected}
        return model

    def expected_shapes(self) -> dict:
        shapes = {CLS_PREFIX + k: v for k, v in self.cls_stack.shapes().items()}
        if self.ttn is not None:
            shapes.update({TTN_PREFIX + k: v for k, v in self.ttn.stack.shapes().items()})
        return shapes


def build_model(T: int, N: int, classifier: ClassifierConfig | None = None,
                ttn: TTNConfig | None = None, seed: int = 0,
                zero_output: bool = True) -> Model:
    """Initialize a model.

    The classifier and the TTN draw from independent streams of ``seed``, so
    a model built with and without a TTN shares its classifier weights.  The
    classifier's output layer starts at zero (uniform predictions).
    """
    classifier = classifier or ClassifierConfig()
    cls_rng, ttn_rng = (np.random.default_rng(s)
                        for s in np.random.SeedSequence(seed).spawn(2))
    params = classifier.stack(T, N).init(cls_rng, CLS_PREFIX)
    if zero_output:
        params[CLS_PREFIX + "out.w"][:] = 0.0
    if ttn is not None:
        if ttn.output_length != T or ttn.in_channels != N:
            raise ShapeError(f"TTN config ({ttn.output_length}, {ttn.in_channels}) "
                             f"does not match input ({T}, {N})")
        params.update(init_ttn(ttn, ttn_rng))
    return Model(T, N, classifier, ttn, params)
