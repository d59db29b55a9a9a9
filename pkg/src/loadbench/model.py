"""Trainable consumer: a linear softmax classifier plus a fixed-delay sink.

The benchmark loop only needs a consumer whose forward/backward cost is real
and controllable relative to loading cost; a linear layer over flattened
pixels does that without dragging in a DL framework.  ``synthetic_consumer``
is the other end of the dial: it touches every element once and then sleeps
a fixed time.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .prng import stream_u64


@dataclass
class LinearModel:
    """Softmax classifier: logits = X @ W.T + b, trained with plain SGD."""

    W: np.ndarray  # (n_classes, n_features)
    b: np.ndarray  # (n_classes,)
    learning_rate: float = 0.01

    @classmethod
    def create(cls, n_features: int, n_classes: int, learning_rate: float = 0.01,
               seed: int = 0, scale: float = 0.01,
               dtype=np.float32) -> "LinearModel":
        """Small deterministic init: uniform in [-scale, scale)."""
        draws = stream_u64(seed, n_classes * n_features)
        unit = (draws >> np.uint64(11)).astype(np.float64) / float(1 << 53)
        W = ((unit * 2.0 - 1.0) * scale).reshape(n_classes, n_features).astype(dtype)
        return cls(W=W, b=np.zeros(n_classes, dtype=dtype),
                   learning_rate=learning_rate)

    @property
    def n_features(self) -> int:
        return self.W.shape[1]

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    def forward(self, X: np.ndarray) -> np.ndarray:
        """Logits for a batch of flattened inputs, shape (B, n_classes)."""
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"expected X of shape (B, {self.n_features}), got {X.shape}")
        return X @ self.W.T + self.b

    def loss_and_grads(self, X: np.ndarray,
                       y: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        """Mean softmax cross-entropy and its analytic gradients.

        Softmax is computed with max subtraction; the gradient is the
        textbook (p - onehot) / B contraction against X.
        """
        y = np.asarray(y)
        if np.any(y < 0) or np.any(y >= self.n_classes):
            raise ValueError("labels out of range")
        logits = self.forward(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        log_probs = shifted - log_norm
        batch = X.shape[0]
        loss = float(-log_probs[np.arange(batch), y].mean())
        dlogits = np.exp(log_probs)
        dlogits[np.arange(batch), y] -= 1.0
        dlogits /= batch
        dW = dlogits.T @ X
        db = dlogits.sum(axis=0)
        return loss, dW, db

    def sgd_step(self, dW: np.ndarray, db: np.ndarray) -> None:
        if dW.shape != self.W.shape or db.shape != self.b.shape:
            raise ValueError("gradient shapes do not match parameters")
        self.W -= self.learning_rate * dW.astype(self.W.dtype, copy=False)
        self.b -= self.learning_rate * db.astype(self.b.dtype, copy=False)

    def train_step(self, X: np.ndarray, y: np.ndarray) -> float:
        loss, dW, db = self.loss_and_grads(X, y)
        self.sgd_step(dW, db)
        return loss


def flatten_batch(X: np.ndarray) -> np.ndarray:
    """(B, C, H, W) -> (B, C*H*W) view for the linear model."""
    return X.reshape(X.shape[0], -1)


def batch_checksum(X: np.ndarray, y: np.ndarray) -> float:
    """Touch every element of a batch exactly once."""
    return float(X.sum(dtype=np.float64)) + float(np.asarray(y).sum())


def synthetic_consumer(delay_s: float = 0.0):
    """A consumer callable that checksums the batch and then waits ``delay_s``."""
    if delay_s < 0:
        raise ValueError("delay must be >= 0")

    def consume(batch) -> float:
        checksum = batch_checksum(batch.X, batch.y)
        if delay_s > 0:
            time.sleep(delay_s)
        return checksum

    return consume
