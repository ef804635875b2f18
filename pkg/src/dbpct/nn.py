"""From-scratch convolutional network on float64 numpy tensors.

Tensors are plain ndarrays of shape (batch, channels, height, width).
Every layer implements an exact backward pass; the test suite checks each
one against central finite differences, so nothing here may take
shortcuts with the gradients.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ConvLayer",
    "BatchNormLayer",
    "relu",
    "relu_backward",
    "mse_loss",
    "Adam",
    "Network",
    "TrainingDivergedError",
]


class TrainingDivergedError(RuntimeError):
    """Raised when a non-finite value appears during optimization."""


def _require_4d(x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ValueError(f"{name} must be 4-D (batch, channels, h, w), got {x.shape}")
    return x


def _im2col_nhwc(x: np.ndarray) -> np.ndarray:
    """Unfold 3x3 neighborhoods of a channels-last tensor into rows.

    Input (b, h, w, c) is zero padded by one pixel; output is
    ``(b*h*w, 9*c)`` with tap-major column order, so every slice copy is
    contiguous along the channel axis.
    """
    b, h, w, c = x.shape
    padded = np.zeros((b, h + 2, w + 2, c))
    padded[:, 1:-1, 1:-1, :] = x
    cols = np.empty((b, h, w, 9, c))
    for tap in range(9):
        dy, dx = divmod(tap, 3)
        cols[:, :, :, tap, :] = padded[:, dy : dy + h, dx : dx + w, :]
    return cols.reshape(b * h * w, 9 * c)


class ConvLayer:
    """3x3 convolution (cross-correlation), stride 1, zero padding 1.

    Output spatial size equals input spatial size.  Compute runs
    channels-last (im2col plus one matrix product per pass); the public
    tensors stay channels-first.  The column matrix is cached in training
    mode and reused for the weight gradient, and the input gradient is
    the forward convolution of the output gradient with the
    channel-swapped, spatially flipped kernel bank.
    """

    def __init__(self, in_channels: int, out_channels: int,
                 rng: np.random.Generator | None = None):
        self.in_channels = in_channels
        self.out_channels = out_channels
        std = np.sqrt(2.0 / (in_channels * 9))
        if rng is None:
            self.weights = np.zeros((out_channels, in_channels, 3, 3))
        else:
            self.weights = rng.normal(0.0, std, size=(out_channels, in_channels, 3, 3))
        self.bias = np.zeros(out_channels)
        self._cols = None
        self._in_shape = None

    def _flat_weights(self, w: np.ndarray) -> np.ndarray:
        # (out, in, 3, 3) -> (out, 9*in) matching the tap-major column order
        return w.transpose(0, 2, 3, 1).reshape(w.shape[0], -1)

    def _forward_nhwc(self, x: np.ndarray, train: bool) -> np.ndarray:
        b, h, w, _ = x.shape
        cols = _im2col_nhwc(x)
        out = cols @ self._flat_weights(self.weights).T + self.bias
        self._cols = cols if train else None
        self._in_shape = x.shape if train else None
        return out.reshape(b, h, w, self.out_channels)

    def _backward_nhwc(self, grad_out: np.ndarray):
        if self._cols is None:
            raise RuntimeError("backward called before a training-mode forward")
        b, h, w, c = self._in_shape
        if grad_out.shape != (b, h, w, self.out_channels):
            raise ValueError(
                f"grad_out shape {grad_out.shape} does not match forward "
                f"output {(b, h, w, self.out_channels)}"
            )
        g2 = grad_out.reshape(b * h * w, self.out_channels)
        grad_bias = g2.sum(axis=0)
        grad_weights = (
            (g2.T @ self._cols)
            .reshape(self.out_channels, 3, 3, self.in_channels)
            .transpose(0, 3, 1, 2)
        )
        # grad wrt input: same-padded cross-correlation with the flipped,
        # channel-transposed kernels
        flipped = self.weights[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        gcols = _im2col_nhwc(grad_out)
        grad_input = (gcols @ self._flat_weights(flipped).T).reshape(b, h, w, c)
        return grad_input, grad_weights, grad_bias

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x = _require_4d(x, "conv input")
        if x.shape[1] != self.in_channels:
            raise ValueError(
                f"input has {x.shape[1]} channels, layer expects {self.in_channels}"
            )
        out = self._forward_nhwc(np.ascontiguousarray(x.transpose(0, 2, 3, 1)), train)
        return np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def backward(self, grad_out: np.ndarray):
        """Return ``(grad_input, grad_weights, grad_bias)`` for the cached
        forward input."""
        g = _require_4d(grad_out, "grad_out")
        if self._in_shape is not None:
            b, h, w, _ = self._in_shape
            if g.shape != (b, self.out_channels, h, w):
                raise ValueError(
                    f"grad_out shape {g.shape} does not match forward output "
                    f"{(b, self.out_channels, h, w)}"
                )
        gi, gw, gb = self._backward_nhwc(
            np.ascontiguousarray(g.transpose(0, 2, 3, 1))
        )
        return np.ascontiguousarray(gi.transpose(0, 3, 1, 2)), gw, gb

    def params(self):
        return [self.weights, self.bias]


class BatchNormLayer:
    """Per-channel batch normalization with learned scale and shift.

    Training mode normalizes by mini-batch statistics over (batch, h, w)
    and updates running estimates with momentum 0.1; running variance is
    stored biased.  Eval mode normalizes by the running estimates.
    """

    EPS = 1e-5
    MOMENTUM = 0.1

    def __init__(self, channels: int):
        self.channels = channels
        self.gamma = np.ones(channels)
        self.beta = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self._cache = None

    def _forward_nhwc(self, x: np.ndarray, train: bool) -> np.ndarray:
        if not train:
            self._cache = None
            inv_std = 1.0 / np.sqrt(self.running_var + self.EPS)
            return self.gamma * ((x - self.running_mean) * inv_std) + self.beta
        count = x.shape[0] * x.shape[1] * x.shape[2]
        if count < 2:
            raise ValueError(
                "training-mode batchnorm needs at least 2 elements per channel"
            )
        mean = x.mean(axis=(0, 1, 2))
        var = x.var(axis=(0, 1, 2))  # biased
        inv_std = 1.0 / np.sqrt(var + self.EPS)
        x_hat = (x - mean) * inv_std
        self.running_mean = (1.0 - self.MOMENTUM) * self.running_mean + self.MOMENTUM * mean
        self.running_var = (1.0 - self.MOMENTUM) * self.running_var + self.MOMENTUM * var
        self._cache = (x_hat, inv_std, count)
        return self.gamma * x_hat + self.beta

    def _backward_nhwc(self, grad_out: np.ndarray):
        if self._cache is None:
            raise RuntimeError("backward called before a training-mode forward")
        x_hat, inv_std, count = self._cache
        if grad_out.shape != x_hat.shape:
            raise ValueError(
                f"grad_out shape {grad_out.shape} does not match forward "
                f"input {x_hat.shape}"
            )
        grad_gamma = (grad_out * x_hat).sum(axis=(0, 1, 2))
        grad_beta = grad_out.sum(axis=(0, 1, 2))
        gx = grad_out * self.gamma
        grad_input = (inv_std / count) * (
            count * gx
            - gx.sum(axis=(0, 1, 2))
            - x_hat * (gx * x_hat).sum(axis=(0, 1, 2))
        )
        return grad_input, grad_gamma, grad_beta

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x = _require_4d(x, "batchnorm input")
        if x.shape[1] != self.channels:
            raise ValueError(
                f"input has {x.shape[1]} channels, layer expects {self.channels}"
            )
        out = self._forward_nhwc(np.ascontiguousarray(x.transpose(0, 2, 3, 1)), train)
        return np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def backward(self, grad_out: np.ndarray):
        """Return ``(grad_input, grad_gamma, grad_beta)``, including the
        dependence of the batch statistics on the input."""
        g = _require_4d(grad_out, "grad_out")
        gi, gg, gb = self._backward_nhwc(
            np.ascontiguousarray(g.transpose(0, 2, 3, 1))
        )
        return np.ascontiguousarray(gi.transpose(0, 3, 1, 2)), gg, gb

    def params(self):
        return [self.gamma, self.beta]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pass gradient where the forward input was positive."""
    return np.where(x > 0.0, grad_out, 0.0)


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Half mean squared error over the batch.

    Returns ``(loss, grad_pred)`` with
    ``loss = sum_k ||target_k - pred_k||^2 / (2 K)`` for batch size K.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape}, target {target.shape}")
    k = pred.shape[0]
    diff = pred - target
    loss = float((diff * diff).sum()) / (2.0 * k)
    return loss, diff / k


class Adam:
    """Standard Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8)."""

    def __init__(self, params: list[np.ndarray],
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray], lr: float) -> None:
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        for g, p in zip(grads, self.params):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter {p.shape}")
            if not np.all(np.isfinite(g)):
                raise TrainingDivergedError("non-finite gradient in optimizer step")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for i, (g, p) in enumerate(zip(grads, self.params)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            p -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Network:
    """The reconstruction network: Conv(m->width) + ReLU, then ``depth``
    blocks of Conv(width->width) + BN + ReLU, then Conv(width->1).

    Fully convolutional with "same" padding throughout, so it accepts any
    spatial size >= 3: small patches during training, whole slices at
    inference.
    """

    def __init__(self, views: int, depth: int, width: int, seed: int = 0):
        if views < 1 or depth < 0 or width < 1:
            raise ValueError(
                f"invalid architecture: views={views} depth={depth} width={width}"
            )
        self.views = views
        self.depth = depth
        self.width = width
        rng = np.random.Generator(np.random.PCG64(seed))
        self.conv_in = ConvLayer(views, width, rng)
        self.blocks = [
            (ConvLayer(width, width, rng), BatchNormLayer(width))
            for _ in range(depth)
        ]
        self.conv_out = ConvLayer(width, 1, rng)
        self._acts = None

    @property
    def in_channels(self) -> int:
        return self.views

    def layers(self):
        """Parameterized layers in forward order."""
        out = [self.conv_in]
        for conv, bn in self.blocks:
            out.append(conv)
            out.append(bn)
        out.append(self.conv_out)
        return out

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers() for p in layer.params()]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x = _require_4d(x, "network input")
        if x.shape[1] != self.views:
            raise ValueError(
                f"input has {x.shape[1]} channels, network expects {self.views}"
            )
        if x.shape[2] < 3 or x.shape[3] < 3:
            raise ValueError(f"spatial size must be >= 3, got {x.shape[2:]}")
        # the whole chain runs channels-last; convert once on each side
        h = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
        acts = []  # pre-activation tensors feeding each ReLU
        z = self.conv_in._forward_nhwc(h, train)
        assert np.all(np.isfinite(z))
        acts.append(z)
        h = relu(z)
        for conv, bn in self.blocks:
            z = bn._forward_nhwc(conv._forward_nhwc(h, train), train)
            assert np.all(np.isfinite(z))
            acts.append(z)
            h = relu(z)
        out = self.conv_out._forward_nhwc(h, train)
        assert np.all(np.isfinite(out))
        self._acts = acts if train else None
        return np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def backward(self, grad_out: np.ndarray):
        """Return ``(grad_input, grads)`` with ``grads`` aligned to
        :meth:`params` order."""
        if self._acts is None:
            raise RuntimeError("backward called before a training-mode forward")
        acts = self._acts
        g = np.ascontiguousarray(
            _require_4d(grad_out, "grad_out").transpose(0, 2, 3, 1)
        )
        g, gw, gb = self.conv_out._backward_nhwc(g)
        rev_grads = [gb, gw]
        for i in range(self.depth - 1, -1, -1):
            conv, bn = self.blocks[i]
            g = relu_backward(acts[i + 1], g)
            g, ggamma, gbeta = bn._backward_nhwc(g)
            rev_grads += [gbeta, ggamma]
            g, gw, gb = conv._backward_nhwc(g)
            rev_grads += [gb, gw]
        g = relu_backward(acts[0], g)
        g, gw, gb = self.conv_in._backward_nhwc(g)
        rev_grads += [gb, gw]
        return np.ascontiguousarray(g.transpose(0, 3, 1, 2)), rev_grads[::-1]
