"""Layer forward/backward kernels. Data layout is (N, C, H, W) throughout."""
from __future__ import annotations

import numpy as np


def im2col(x, kh, kw, stride, padding):
    """Unfold conv windows: (N, C, H, W) -> (N, C*kh*kw, out_h*out_w)."""
    n, c, h, w = x.shape
    out_h = (h + 2 * padding - kh) // stride + 1
    out_w = (w + 2 * padding - kw) // stride + 1
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = np.empty((n, c, kh, kw, out_h, out_w), dtype=x.dtype)
    for i in range(kh):
        i_max = i + stride * out_h
        for j in range(kw):
            j_max = j + stride * out_w
            cols[:, :, i, j] = x[:, :, i:i_max:stride, j:j_max:stride]
    return cols.reshape(n, c * kh * kw, out_h * out_w), out_h, out_w


def col2im(dcols, x_shape, kh, kw, stride, padding):
    """Scatter-add the inverse of im2col back onto the input gradient."""
    n, c, h, w = x_shape
    out_h = (h + 2 * padding - kh) // stride + 1
    out_w = (w + 2 * padding - kw) // stride + 1
    dcols = dcols.reshape(n, c, kh, kw, out_h, out_w)
    dx = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=dcols.dtype)
    for i in range(kh):
        i_max = i + stride * out_h
        for j in range(kw):
            j_max = j + stride * out_w
            dx[:, :, i:i_max:stride, j:j_max:stride] += dcols[:, :, i, j]
    if padding:
        dx = dx[:, :, padding:-padding, padding:-padding]
    return dx


class Layer:
    """Base: parameterless, cache-free passthrough."""

    def params(self) -> dict:
        return {}

    def grads(self) -> dict:
        return {}

    def state(self) -> dict:
        return self.params()

    def astype(self, dtype) -> None:
        pass


class Conv(Layer):
    def __init__(self, in_channels, out_channels, kernel, stride, padding, bias, rng, dtype):
        kh, kw = kernel
        fan_in = in_channels * kh * kw
        self.weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), (out_channels, in_channels, kh, kw)).astype(dtype)
        self.bias = np.zeros(out_channels, dtype=dtype) if bias else None
        self.stride = stride
        self.padding = padding
        self.d_weight = None
        self.d_bias = None
        self._cache = None

    def forward(self, x, train):
        out_c, in_c, kh, kw = self.weight.shape
        cols, out_h, out_w = im2col(x, kh, kw, self.stride, self.padding)
        w2d = self.weight.reshape(out_c, -1)
        out = np.matmul(w2d, cols)
        if self.bias is not None:
            out += self.bias[None, :, None]
        if train:
            self._cache = (x.shape, cols)
        return out.reshape(x.shape[0], out_c, out_h, out_w)

    def backward(self, dout):
        x_shape, cols = self._cache
        n, out_c, out_h, out_w = dout.shape
        dflat = dout.reshape(n, out_c, out_h * out_w)
        w2d = self.weight.reshape(out_c, -1)
        self.d_weight = np.einsum("nop,ncp->oc", dflat, cols).reshape(self.weight.shape)
        if self.bias is not None:
            self.d_bias = dflat.sum(axis=(0, 2))
        dcols = np.matmul(w2d.T, dflat)
        kh, kw = self.weight.shape[2:]
        return col2im(dcols, x_shape, kh, kw, self.stride, self.padding)

    def params(self):
        p = {"weight": self.weight}
        if self.bias is not None:
            p["bias"] = self.bias
        return p

    def grads(self):
        g = {"weight": self.d_weight}
        if self.bias is not None:
            g["bias"] = self.d_bias
        return g

    def astype(self, dtype):
        self.weight = self.weight.astype(dtype)
        if self.bias is not None:
            self.bias = self.bias.astype(dtype)
        self._cache = None


class BatchNorm(Layer):
    """Spatial batchnorm. Eval mode uses running statistics (momentum 0.1,
    biased batch variance, eps 1e-5)."""

    MOMENTUM = 0.1
    EPS = 1e-5

    def __init__(self, channels, dtype):
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.d_gamma = None
        self.d_beta = None
        self._cache = None

    def forward(self, x, train, update_stats=None):
        if update_stats is None:
            update_stats = train
        if train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            if update_stats:
                m = self.MOMENTUM
                self.running_mean = ((1 - m) * self.running_mean + m * mean).astype(x.dtype)
                self.running_var = ((1 - m) * self.running_var + m * var).astype(x.dtype)
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.EPS)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        out = self.gamma[None, :, None, None] * xhat + self.beta[None, :, None, None]
        if train:
            self._cache = (xhat, inv_std)
        return out

    def backward(self, dout):
        xhat, inv_std = self._cache
        m = dout.shape[0] * dout.shape[2] * dout.shape[3]
        self.d_gamma = (dout * xhat).sum(axis=(0, 2, 3))
        self.d_beta = dout.sum(axis=(0, 2, 3))
        dxhat = dout * self.gamma[None, :, None, None]
        # Standard batch-stat backprop, vectorized per channel.
        term = (
            dxhat
            - dxhat.mean(axis=(0, 2, 3))[None, :, None, None]
            - xhat * (dxhat * xhat).mean(axis=(0, 2, 3))[None, :, None, None]
        )
        return term * inv_std[None, :, None, None]

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self):
        return {"gamma": self.d_gamma, "beta": self.d_beta}

    def state(self):
        return {
            "gamma": self.gamma,
            "beta": self.beta,
            "running_mean": self.running_mean,
            "running_var": self.running_var,
        }

    def astype(self, dtype):
        self.gamma = self.gamma.astype(dtype)
        self.beta = self.beta.astype(dtype)
        self.running_mean = self.running_mean.astype(dtype)
        self.running_var = self.running_var.astype(dtype)
        self._cache = None


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x, train):
        out = np.maximum(x, 0)
        if train:
            self._mask = x > 0
        return out

    def backward(self, dout):
        return dout * self._mask


class MaxPool(Layer):
    def __init__(self, kernel, stride):
        self.kernel = kernel
        self.stride = stride
        self._cache = None

    def forward(self, x, train):
        n, c, h, w = x.shape
        flat = x.reshape(n * c, 1, h, w)
        cols, out_h, out_w = im2col(flat, self.kernel, self.kernel, self.stride, 0)
        arg = cols.argmax(axis=1)
        out = np.take_along_axis(cols, arg[:, None, :], axis=1)[:, 0, :]
        if train:
            self._cache = (x.shape, cols.shape, arg)
        return out.reshape(n, c, out_h, out_w)

    def backward(self, dout):
        x_shape, cols_shape, arg = self._cache
        n, c, h, w = x_shape
        dcols = np.zeros(cols_shape, dtype=dout.dtype)
        dflat = dout.reshape(n * c, -1)
        np.put_along_axis(dcols, arg[:, None, :], dflat[:, None, :], axis=1)
        dx = col2im(dcols, (n * c, 1, h, w), self.kernel, self.kernel, self.stride, 0)
        return dx.reshape(n, c, h, w)


class Linear(Layer):
    def __init__(self, in_features, out_features, bias, rng, dtype):
        self.weight = rng.normal(0.0, np.sqrt(2.0 / in_features), (out_features, in_features)).astype(dtype)
        self.bias = np.zeros(out_features, dtype=dtype) if bias else None
        self.d_weight = None
        self.d_bias = None
        self._x = None

    def forward(self, x, train):
        out = x @ self.weight.T
        if self.bias is not None:
            out += self.bias
        if train:
            self._x = x
        return out

    def backward(self, dout):
        self.d_weight = dout.T @ self._x
        if self.bias is not None:
            self.d_bias = dout.sum(axis=0)
        return dout @ self.weight

    def params(self):
        p = {"weight": self.weight}
        if self.bias is not None:
            p["bias"] = self.bias
        return p

    def grads(self):
        g = {"weight": self.d_weight}
        if self.bias is not None:
            g["bias"] = self.d_bias
        return g

    def astype(self, dtype):
        self.weight = self.weight.astype(dtype)
        if self.bias is not None:
            self.bias = self.bias.astype(dtype)
        self._x = None
