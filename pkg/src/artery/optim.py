"""Adam optimizer over named parameter tensors."""

from __future__ import annotations

import numpy as np

from .errors import NumericError
from .tensor import Tensor


class Adam:
    """Adam with bias-corrected first and second moments.

    Update per step t for each parameter p with gradient g:

        m <- beta1*m + (1-beta1)*g
        v <- beta2*v + (1-beta2)*g^2
        p <- p - lr * (m / (1-beta1^t)) / (sqrt(v / (1-beta2^t)) + eps)

    A missing gradient counts as zero, so a step with no gradients
    leaves both the parameters and the moments unchanged.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if isinstance(params, dict):
            items = list(params.items())
        else:
            items = [(p.name or f"param{i}", p) for i, p in enumerate(params)]
        for name, p in items:
            if not isinstance(p, Tensor) or not p.requires_grad:
                raise NumericError(f"Adam: '{name}' is not a trainable tensor")
        self._items = items
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m = [np.zeros_like(p.values) for _, p in items]
        self._v = [np.zeros_like(p.values) for _, p in items]

    @property
    def params(self):
        return [p for _, p in self._items]

    def zero_grad(self):
        for _, p in self._items:
            p.grad = None

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, (name, p) in enumerate(self._items):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.values)
            elif not np.all(np.isfinite(g)):
                raise NumericError(f"Adam: non-finite gradient for parameter '{name}'")
            m = self._m[i]
            v = self._v[i]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.values -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self):
        return {
            "t": self.t,
            "m": [m.tolist() for m in self._m],
            "v": [v.tolist() for v in self._v],
        }

    def load_state_dict(self, state):
        self.t = int(state["t"])
        self._m = [np.array(m, dtype=np.float64) for m in state["m"]]
        self._v = [np.array(v, dtype=np.float64) for v in state["v"]]
        if len(self._m) != len(self._items) or len(self._v) != len(self._items):
            raise NumericError("Adam: state does not match parameter list")
        for (name, p), m in zip(self._items, self._m):
            if m.shape != p.values.shape:
                raise NumericError(f"Adam: state shape mismatch for '{name}'")
