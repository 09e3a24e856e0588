"""Feedforward trust model.

A fully connected network with ReLU hidden layers and a softmax output over
five trust levels. Training minimizes mean categorical cross-entropy with
Adam and stops once the training cost falls to a threshold ``tau`` or the
epoch budget runs out. The softmax probability of the selected level is the
confidence of an assessment, and input-output sensitivities computed by
backpropagating to the input layer rank the attributes.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, ModelLoadError, TrainingError, TrustDomainError

log = logging.getLogger(__name__)

N_LEVELS = 5
MODEL_FORMAT = "iottrust-model"
MODEL_VERSION = 1


class TrustLevel(enum.IntEnum):
    NotTrusted = 0
    LowlyTrusted = 1
    Neutral = 2
    Trusted = 3
    HighlyTrusted = 4


@dataclass
class NetworkParameters:
    """Layer sizes, weights and biases of a trust model.

    ``weights[i]`` has shape ``(layer_sizes[i], layer_sizes[i + 1])`` so a
    batch ``X`` of shape ``(n, layer_sizes[0])`` propagates as ``X @ W + b``.
    """

    layer_sizes: list
    weights: list
    biases: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise TrustDomainError(f"invalid layer sizes {self.layer_sizes}")
        n = len(self.layer_sizes) - 1
        if len(self.weights) != n or len(self.biases) != n:
            raise TrustDomainError(f"expected {n} weight matrices and bias vectors")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if np.shape(w) != shape or np.shape(b) != (shape[1],):
                raise TrustDomainError(
                    f"layer {i}: weights {np.shape(w)} / biases {np.shape(b)} "
                    f"inconsistent with sizes {shape}")

    @property
    def n_inputs(self):
        return self.layer_sizes[0]

    @property
    def n_outputs(self):
        return self.layer_sizes[-1]

    def copy(self):
        return NetworkParameters(list(self.layer_sizes),
                                 [w.copy() for w in self.weights],
                                 [b.copy() for b in self.biases],
                                 json.loads(json.dumps(self.metadata)))


def build_network(layer_sizes: Sequence[int], seed: int = 0, metadata=None) -> NetworkParameters:
    """He-initialized network; requires at least one hidden layer and 5 outputs."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 3:
        raise TrustDomainError(f"need input, >=1 hidden and output layer, got {sizes}")
    if sizes[-1] != N_LEVELS:
        raise TrustDomainError(f"output layer must have {N_LEVELS} neurons, got {sizes[-1]}")
    if min(sizes) < 1:
        raise TrustDomainError(f"layer sizes must be positive, got {sizes}")
    rng = np.random.default_rng(seed)
    weights = [rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, n_out))
               for n_in, n_out in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(n_out) for n_out in sizes[1:]]
    meta = {"init_seed": int(seed)}
    meta.update(metadata or {})
    return NetworkParameters(sizes, weights, biases, meta)


def softmax(logits, axis=-1):
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _as_batch(net, features):
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.ndim != 2 or x.shape[1] != net.n_inputs:
        raise ContractError(f"expected {net.n_inputs} features, got shape {np.shape(features)}")
    return x, single


def _propagate(weights, biases, X, masks=None):
    """Forward pass returning hidden pre-activations, layer inputs and logits."""
    inputs = [X]
    pre = []
    a = X
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w + b
        if i == last:
            return pre, inputs, z
        pre.append(z)
        a = np.maximum(z, 0.0)
        if masks is not None:
            a = a * masks[i]
        inputs.append(a)


def logits(net: NetworkParameters, features) -> np.ndarray:
    x, single = _as_batch(net, features)
    z = _propagate(net.weights, net.biases, x)[2]
    return z[0] if single else z


def forward(net: NetworkParameters, features) -> np.ndarray:
    """Output probabilities for one feature vector or a batch (dropout off)."""
    return softmax(logits(net, features))


def cross_entropy(z, y) -> float:
    """Mean categorical cross-entropy of integer labels ``y`` under logits ``z``."""
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(log_norm - z[np.arange(len(y)), y]))


def _backprop(weights, biases, X, y, masks=None):
    pre, inputs, z = _propagate(weights, biases, X, masks)
    n = len(y)
    loss = cross_entropy(z, y)
    delta = softmax(z)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    gW = [None] * len(weights)
    gb = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        gW[i] = inputs[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ weights[i].T
            delta *= pre[i - 1] > 0
            if masks is not None:
                delta *= masks[i - 1]
    return loss, gW, gb


def loss_and_gradients(net: NetworkParameters, X, y, masks=None):
    """Mean cross-entropy and its gradients w.r.t. every weight and bias.

    Parameters
    ----------
    X : ndarray (n, n_inputs)
    y : ndarray (n,) of int trust levels
    masks : list of ndarray, optional
        One dropout mask per hidden layer, already scaled by ``1 / (1 - p)``.

    Returns
    -------
    loss : float
    grad_weights, grad_biases : list of ndarray
    """
    X, _ = _as_batch(net, X)
    y = np.asarray(y, dtype=int)
    return _backprop(net.weights, net.biases, X, y, masks)


@dataclass
class TrainConfig:
    tau: float = 0.05
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    dropout_p: float = 0.5
    max_epochs: int = 500
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if not self.tau >= 0:
            raise TrustDomainError(f"tau must be non-negative, got {self.tau}")
        if not (0.0 <= self.dropout_p < 1.0):
            raise TrustDomainError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise TrustDomainError("max_epochs and batch_size must be positive")


@dataclass
class TrainResult:
    net: NetworkParameters
    loss_history: list
    epochs: int
    converged: bool

    @property
    def final_cost(self):
        return self.loss_history[-1]


def fingerprint(X, y) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=float).tobytes())
    h.update(np.ascontiguousarray(y, dtype=np.int64).tobytes())
    return h.hexdigest()[:16]


class _FlatParams:
    """Weights and biases as views into one flat buffer so Adam runs vectorized."""

    def __init__(self, net):
        n = sum(w.size + b.size for w, b in zip(net.weights, net.biases))
        self.flat = np.empty(n)
        self.grad = np.empty(n)
        self.weights, self.biases, self._gw, self._gb = [], [], [], []
        o = 0
        for w, b in zip(net.weights, net.biases):
            for src, views, gviews in ((w, self.weights, self._gw), (b, self.biases, self._gb)):
                k = src.size
                self.flat[o:o + k] = src.ravel()
                views.append(self.flat[o:o + k].reshape(src.shape))
                gviews.append(self.grad[o:o + k].reshape(src.shape))
                o += k

    def set_grad(self, gW, gb):
        for dst, src in zip(self._gw, gW):
            dst[...] = src
        for dst, src in zip(self._gb, gb):
            dst[...] = src


def train(net: NetworkParameters, X, y, cfg: TrainConfig = TrainConfig(),
          callback: Optional[Callable[[int, NetworkParameters], None]] = None) -> TrainResult:
    """Fit the network to labeled attribute vectors.

    Each epoch runs one pass of mini-batch Adam with inverted dropout on the
    hidden layers, then re-evaluates the cost on the whole training set
    with dropout off. Training stops as soon as that cost is at or below
    ``cfg.tau``, or after ``cfg.max_epochs`` epochs.

    ``callback(epoch, net)`` is invoked after every epoch with a live view
    of the parameters; copy it if it must outlive the call.

    Returns a new :class:`TrainResult`; ``net`` itself is left untouched.
    """
    X, _ = _as_batch(net, X)
    y = np.asarray(y, dtype=int)
    if len(X) == 0 or len(X) != len(y):
        raise TrustDomainError(f"need a non-empty training set, got {len(X)} samples / {len(y)} labels")
    if y.min() < 0 or y.max() >= net.n_outputs:
        raise TrustDomainError(f"labels must lie in [0, {net.n_outputs})")

    rng = np.random.default_rng(cfg.seed)
    params = _FlatParams(net)
    m = np.zeros_like(params.flat)
    v = np.zeros_like(params.flat)
    hidden = net.layer_sizes[1:-1]
    keep = 1.0 - cfg.dropout_p
    live = NetworkParameters(net.layer_sizes, params.weights, params.biases, net.metadata)

    history = []
    step = 0
    converged = False
    n = len(X)
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            masks = None
            if cfg.dropout_p > 0:
                masks = [(rng.random((len(idx), h)) < keep) / keep for h in hidden]
            _, gW, gb = _backprop(params.weights, params.biases, X[idx], y[idx], masks)
            params.set_grad(gW, gb)
            g = params.grad
            step += 1
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            m_hat = m / (1.0 - cfg.beta1 ** step)
            v_hat = v / (1.0 - cfg.beta2 ** step)
            params.flat -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)

        cost = cross_entropy(_propagate(params.weights, params.biases, X)[2], y)
        if not np.isfinite(cost):
            raise TrainingError(epoch)
        history.append(cost)
        if callback is not None:
            callback(epoch, live)
        if cost <= cfg.tau:
            converged = True
            break

    log.info("trained %d epochs, final cost %.6f", epoch, history[-1])
    meta = dict(net.metadata)
    meta.update({
        "train_seed": cfg.seed,
        "epochs": epoch,
        "final_cost": history[-1],
        "tau": cfg.tau,
        "converged": converged,
        "dataset_fingerprint": fingerprint(X, y),
    })
    trained = NetworkParameters(list(net.layer_sizes),
                                [w.copy() for w in params.weights],
                                [b.copy() for b in params.biases], meta)
    return TrainResult(trained, history, epoch, converged)


@dataclass(frozen=True)
class TrustAssessment:
    level: TrustLevel
    confidence: float
    probabilities: tuple

    @classmethod
    def from_probabilities(cls, probabilities):
        p = np.asarray(probabilities, dtype=float)
        k = int(np.argmax(p))  # first maximum, i.e. the least trusted level on ties
        return cls(TrustLevel(k), float(p[k]), tuple(float(v) for v in p))


def assess(net: NetworkParameters, features) -> TrustAssessment:
    """Trust level with the highest probability and that probability as confidence."""
    x, single = _as_batch(net, features)
    if not single:
        raise ContractError("assess takes one feature vector; use assess_batch")
    return TrustAssessment.from_probabilities(forward(net, x[0]))


def assess_batch(net: NetworkParameters, X):
    """Levels, confidences and probabilities for a batch of feature vectors."""
    X, _ = _as_batch(net, X)
    p = forward(net, X)
    levels = np.argmax(p, axis=1)
    return levels, p[np.arange(len(p)), levels], p


def input_jacobian(net: NetworkParameters, X) -> np.ndarray:
    """Derivatives of each output probability w.r.t. each input.

    Returns
    -------
    ndarray (n, n_outputs, n_inputs)
    """
    X, _ = _as_batch(net, X)
    pre, _, z = _propagate(net.weights, net.biases, X)
    p = softmax(z)
    k = p.shape[1]
    # d p_k / d z_j = p_k (delta_kj - p_j)
    J = p[:, :, None] * (np.eye(k)[None, :, :] - p[:, None, :])
    for i in range(len(net.weights) - 1, -1, -1):
        J = J @ net.weights[i].T
        if i > 0:
            J = J * (pre[i - 1] > 0)[:, None, :]
    return J


def perspective_of(name: str) -> str:
    return name.split(".", 1)[0]


@dataclass
class SignificanceReport:
    """Input-output sensitivities of a trained model.

    ``per_level[a, k]`` is the mean absolute derivative of output ``k``
    with respect to attribute ``a``.
    """

    attribute_names: list
    per_level: np.ndarray

    @property
    def per_attribute(self) -> np.ndarray:
        return self.per_level.max(axis=1)

    @property
    def perspectives(self) -> list:
        seen = []
        for name in self.attribute_names:
            p = perspective_of(name)
            if p not in seen:
                seen.append(p)
        return seen

    def perspective_levels(self, perspective) -> np.ndarray:
        idx = [i for i, n in enumerate(self.attribute_names) if perspective_of(n) == perspective]
        return self.per_level[idx].max(axis=0)

    @property
    def per_perspective(self) -> dict:
        return {p: float(self.perspective_levels(p).max()) for p in self.perspectives}

    def to_dict(self):
        return {
            "attributes": [
                {"name": n, "per_level": [float(v) for v in row], "max": float(row.max())}
                for n, row in zip(self.attribute_names, self.per_level)
            ],
            "perspectives": self.per_perspective,
        }


def attribute_significance(net: NetworkParameters, X, attribute_names=None) -> SignificanceReport:
    """Mean absolute input-output sensitivity over an evaluation set."""
    X, _ = _as_batch(net, X)
    if len(X) == 0:
        raise TrustDomainError("evaluation set is empty")
    if attribute_names is None:
        attribute_names = [f"attr{i}" for i in range(net.n_inputs)]
    if len(attribute_names) != net.n_inputs:
        raise ContractError(f"{len(attribute_names)} names for {net.n_inputs} inputs")
    J = input_jacobian(net, X)
    return SignificanceReport(list(attribute_names), np.abs(J).mean(axis=0).T)


def prune_attributes(report, threshold: float) -> list:
    """Indices of attributes whose significance reaches ``threshold``.

    ``report`` is a :class:`SignificanceReport` or a vector of per-attribute
    significances. The most significant attribute is always kept.
    """
    if threshold < 0:
        raise TrustDomainError(f"threshold must be non-negative, got {threshold}")
    s = report.per_attribute if isinstance(report, SignificanceReport) else np.asarray(report, float)
    keep = [i for i, v in enumerate(s) if v >= threshold]
    return keep or [int(np.argmax(s))]


def model_to_dict(net: NetworkParameters) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "layer_sizes": list(net.layer_sizes),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "metadata": net.metadata,
    }


def save_model(net: NetworkParameters, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(net), fh, indent=1)
        fh.write("\n")


def load_model(path) -> NetworkParameters:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelLoadError(f"cannot read model {path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelLoadError(f"{path} is not a trust model file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelLoadError(f"unsupported model version {doc.get('version')!r}")
    try:
        return NetworkParameters(doc["layer_sizes"],
                                 [np.array(w, dtype=float).reshape(len(w), -1) for w in doc["weights"]],
                                 [np.array(b, dtype=float) for b in doc["biases"]],
                                 doc.get("metadata", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelLoadError(f"malformed model {path}: {exc}") from None
