"""Hand-rolled MLPs, Adam, and finite-difference gradient checking.

Networks keep all parameters in one flat vector (per-layer views are
created once), so an optimizer step is a handful of vectorized ops and
checkpointing is a single array dump. Hidden activations are tanh, the
output layer is linear. float32 is used for training speed; gradient
checks run the same code in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MLPNet:
    """Fully-connected net over a flat parameter vector.

    sizes = [in, h1, ..., out]; forward/backward return caches and flat
    gradients compatible with `theta`.
    """

    def __init__(self, sizes, seed=0, dtype=np.float32, final_scale=1.0):
        self.sizes = list(sizes)
        self.dtype = np.dtype(dtype)
        self.n_layers = len(sizes) - 1
        self.n_params = sum(
            sizes[i + 1] * sizes[i] + sizes[i + 1] for i in range(self.n_layers)
        )
        self.theta = np.zeros(self.n_params, dtype=self.dtype)
        self._views = []
        off = 0
        for i in range(self.n_layers):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            w = self.theta[off:off + fan_out * fan_in].reshape(fan_out, fan_in)
            off += fan_out * fan_in
            b = self.theta[off:off + fan_out]
            off += fan_out
            self._views.append((w, b))
        rng = np.random.default_rng(seed)
        for i, (w, b) in enumerate(self._views):
            bound = np.sqrt(6.0 / (self.sizes[i] + self.sizes[i + 1]))
            w[:] = rng.uniform(-bound, bound, w.shape).astype(self.dtype)
            if i == self.n_layers - 1:
                w *= final_scale
        # bias stays zero

    def layer(self, i):
        return self._views[i]

    def set_theta(self, theta: np.ndarray) -> None:
        self.theta[:] = theta  # views alias the buffer

    def forward(self, x: np.ndarray):
        """Returns (output, cache); x is (batch, in)."""
        x = np.ascontiguousarray(x, dtype=self.dtype)
        acts = [x]
        h = x
        for i in range(self.n_layers - 1):
            w, b = self._views[i]
            h = np.tanh(h @ w.T + b)
            acts.append(h)
        w, b = self._views[-1]
        out = h @ w.T + b
        return out, acts

    def backward(self, cache, dout: np.ndarray) -> np.ndarray:
        """Flat parameter gradient for output cotangent `dout`."""
        grad = np.zeros(self.n_params, dtype=self.dtype)
        gviews = self._grad_views(grad)
        delta = np.ascontiguousarray(dout, dtype=self.dtype)
        for i in range(self.n_layers - 1, -1, -1):
            w, _ = self._views[i]
            gw, gb = gviews[i]
            a_in = cache[i]
            gw += delta.T @ a_in
            gb += delta.sum(axis=0)
            if i > 0:
                delta = (delta @ w) * (1.0 - cache[i] ** 2)
        return grad

    def backward_input(self, cache, dout: np.ndarray) -> np.ndarray:
        """d(loss)/d(input) only; skips parameter gradients."""
        delta = np.ascontiguousarray(dout, dtype=self.dtype)
        for i in range(self.n_layers - 1, 0, -1):
            w, _ = self._views[i]
            delta = (delta @ w) * (1.0 - cache[i] ** 2)
        w0, _ = self._views[0]
        return delta @ w0

    def _grad_views(self, grad: np.ndarray):
        views = []
        off = 0
        for i in range(self.n_layers):
            fan_in, fan_out = self.sizes[i], self.sizes[i + 1]
            gw = grad[off:off + fan_out * fan_in].reshape(fan_out, fan_in)
            off += fan_out * fan_in
            gb = grad[off:off + fan_out]
            off += fan_out
            views.append((gw, gb))
        return views


class Adam:
    """Adam with bias correction:

        m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
        theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
    """

    def __init__(self, n_params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8,
                 dtype=np.float32):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n_params, dtype=dtype)
        self.v = np.zeros(n_params, dtype=dtype)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        if self.lr == 0.0:
            return
        self.t += 1
        self.m += (1.0 - self.beta1) * (grad - self.m)
        self.v += (1.0 - self.beta2) * (grad * grad - self.v)
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        theta -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_index: int
    passed: bool
    tolerance: float


def grad_check(loss_and_grad, theta: np.ndarray, eps: float = 1e-5,
               tolerance: float = 1e-4) -> GradCheckReport:
    """Compare an analytic gradient with central finite differences.

    loss_and_grad(theta) must return (scalar loss, gradient); theta should
    be float64 for meaningful tolerances.
    """
    theta = np.asarray(theta, dtype=np.float64)
    _, grad = loss_and_grad(theta)
    grad = np.asarray(grad, dtype=np.float64)
    fd = np.empty_like(grad)
    for i in range(theta.size):
        tp = theta.copy()
        tp[i] += eps
        lp, _ = loss_and_grad(tp)
        tm = theta.copy()
        tm[i] -= eps
        lm, _ = loss_and_grad(tm)
        fd[i] = (lp - lm) / (2.0 * eps)
    denom = np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1e-6)
    rel = np.abs(grad - fd) / denom
    worst = int(np.argmax(rel))
    return GradCheckReport(
        max_rel_error=float(rel[worst]),
        worst_index=worst,
        passed=bool(rel[worst] <= tolerance),
        tolerance=tolerance,
    )
