"""Complex-valued network building blocks on top of real torch ops.

A complex tensor is a (real, imag) pair of real tensors, and a complex
convolution is the usual composition of four real convolutions:

    out_re = conv(x_re, W_re) - conv(x_im, W_im)
    out_im = conv(x_re, W_im) + conv(x_im, W_re)

Batch normalization whitens the 2x2 covariance of (re, im) per channel with
the closed-form inverse square root of a symmetric positive-definite matrix
(the deep-complex-networks recipe of Trabelsi et al.), and weights are drawn
with Rayleigh magnitudes and uniform phases. torch supplies the real conv
kernels and reverse-mode differentiation; everything complex-valued is here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F


@dataclass
class ComplexTensor:
    real: torch.Tensor
    imag: torch.Tensor

    def __post_init__(self):
        if self.real.shape != self.imag.shape:
            raise ValueError("real/imag shapes differ")

    @property
    def shape(self):
        return self.real.shape

    @property
    def dtype(self):
        return self.real.dtype

    @property
    def requires_grad(self) -> bool:
        return self.real.requires_grad or self.imag.requires_grad

    def detach(self) -> "ComplexTensor":
        return ComplexTensor(self.real.detach(), self.imag.detach())

    def magnitude(self) -> torch.Tensor:
        return torch.sqrt(self.real * self.real + self.imag * self.imag)


def init_complex_weights(shape, rng: np.random.Generator):
    """Rayleigh(sigma = 1/sqrt(fan_in)) magnitudes with uniform phases.

    shape is [C_out, C_in, kH, kW]; fan_in = C_in * kH * kW. Returned as a
    (W_real, W_imag) pair of float64 numpy arrays; E[|W|^2] = 2 sigma^2.
    """
    shape = tuple(int(s) for s in shape)
    fan_in = int(np.prod(shape[1:]))
    sigma = 1.0 / np.sqrt(fan_in)
    magnitude = rng.rayleigh(sigma, shape)
    phase = rng.uniform(-np.pi, np.pi, shape)
    return magnitude * np.cos(phase), magnitude * np.sin(phase)


@dataclass
class ComplexConvLayer:
    """Weights for one complex conv (or transposed conv) stage.

    Kernels are stored [C_out, C_in, kH, kW] from the layer's own
    perspective regardless of direction; the transposed apply permutes
    the channel axes into torch's layout internally.
    """

    w_real: torch.Tensor
    w_imag: torch.Tensor
    b_real: torch.Tensor
    b_imag: torch.Tensor
    stride: tuple = (1, 1)
    padding: tuple = (0, 0)

    def __post_init__(self):
        if self.w_real.shape != self.w_imag.shape or self.w_real.ndim != 4:
            raise ValueError("kernels must be matching 4-d tensors")
        if min(self.w_real.shape) < 1 or min(self.stride) < 1:
            raise ValueError("kernel dims and strides must be positive")

    @classmethod
    def new(cls, c_in, c_out, kernel, stride, padding, rng, dtype=torch.float32):
        wr, wi = init_complex_weights((c_out, c_in, *kernel), rng)
        make = lambda a: torch.tensor(a, dtype=dtype, requires_grad=True)
        zeros = lambda: torch.zeros(c_out, dtype=dtype, requires_grad=True)
        return cls(make(wr), make(wi), zeros(), zeros(), tuple(stride), tuple(padding))

    def parameters(self) -> dict:
        return {
            "w_real": self.w_real,
            "w_imag": self.w_imag,
            "b_real": self.b_real,
            "b_imag": self.b_imag,
        }


def complex_conv2d(x: ComplexTensor, layer: ComplexConvLayer) -> ComplexTensor:
    if x.real.shape[1] != layer.w_real.shape[1]:
        raise ValueError(
            f"input has {x.real.shape[1]} channels, layer expects {layer.w_real.shape[1]}"
        )
    s, p = layer.stride, layer.padding
    rr = F.conv2d(x.real, layer.w_real, layer.b_real, s, p)
    ii = F.conv2d(x.imag, layer.w_imag, None, s, p)
    ri = F.conv2d(x.real, layer.w_imag, layer.b_imag, s, p)
    ir = F.conv2d(x.imag, layer.w_real, None, s, p)
    return ComplexTensor(rr - ii, ri + ir)


def complex_conv_transpose2d(
    x: ComplexTensor, layer: ComplexConvLayer, output_padding=(0, 0)
) -> ComplexTensor:
    if x.real.shape[1] != layer.w_real.shape[1]:
        raise ValueError(
            f"input has {x.real.shape[1]} channels, layer expects {layer.w_real.shape[1]}"
        )
    s, p = layer.stride, layer.padding
    wr = layer.w_real.transpose(0, 1)
    wi = layer.w_imag.transpose(0, 1)
    rr = F.conv_transpose2d(x.real, wr, layer.b_real, s, p, output_padding)
    ii = F.conv_transpose2d(x.imag, wi, None, s, p, output_padding)
    ri = F.conv_transpose2d(x.real, wi, layer.b_imag, s, p, output_padding)
    ir = F.conv_transpose2d(x.imag, wr, None, s, p, output_padding)
    return ComplexTensor(rr - ii, ri + ir)


def lecrelu(x: ComplexTensor, slope: float = 0.01) -> ComplexTensor:
    """Leaky ReLU applied to the real and imaginary parts independently."""
    if not 0.0 <= slope < 1.0:
        raise ValueError("slope must lie in [0, 1)")
    return ComplexTensor(
        F.leaky_relu(x.real, slope), F.leaky_relu(x.imag, slope)
    )


@dataclass
class ComplexBatchNorm:
    """Per-channel complex batch norm with 2x2 covariance whitening.

    gamma is a symmetric 2x2 matrix per channel (rr, ri, ii components),
    initialized to diag(1/sqrt(2)) so the output covariance starts at
    0.5*I, matching a unit-magnitude complex variance split across the
    two components. Running stats use momentum-keep updates.
    """

    gamma_rr: torch.Tensor
    gamma_ri: torch.Tensor
    gamma_ii: torch.Tensor
    beta_re: torch.Tensor
    beta_im: torch.Tensor
    running_mean_re: torch.Tensor
    running_mean_im: torch.Tensor
    running_vrr: torch.Tensor
    running_vri: torch.Tensor
    running_vii: torch.Tensor
    momentum: float = 0.9
    eps: float = 1e-5

    @classmethod
    def new(cls, channels, dtype=torch.float32, momentum=0.9, eps=1e-5):
        c = int(channels)
        param = lambda v: torch.full((c,), v, dtype=dtype, requires_grad=True)
        buf = lambda v: torch.full((c,), v, dtype=dtype)
        inv_sqrt2 = 1.0 / np.sqrt(2.0)
        return cls(
            gamma_rr=param(inv_sqrt2),
            gamma_ri=param(0.0),
            gamma_ii=param(inv_sqrt2),
            beta_re=param(0.0),
            beta_im=param(0.0),
            running_mean_re=buf(0.0),
            running_mean_im=buf(0.0),
            running_vrr=buf(inv_sqrt2),
            running_vri=buf(0.0),
            running_vii=buf(inv_sqrt2),
            momentum=momentum,
            eps=eps,
        )

    def parameters(self) -> dict:
        return {
            "gamma_rr": self.gamma_rr,
            "gamma_ri": self.gamma_ri,
            "gamma_ii": self.gamma_ii,
            "beta_re": self.beta_re,
            "beta_im": self.beta_im,
        }

    def buffers(self) -> dict:
        return {
            "running_mean_re": self.running_mean_re,
            "running_mean_im": self.running_mean_im,
            "running_vrr": self.running_vrr,
            "running_vri": self.running_vri,
            "running_vii": self.running_vii,
        }


def complex_batch_norm(
    x: ComplexTensor, bn: ComplexBatchNorm, training: bool
) -> ComplexTensor:
    dims = (0, 2, 3)
    view = lambda v: v.view(1, -1, 1, 1)

    if training:
        count = x.real.shape[0] * x.real.shape[2] * x.real.shape[3]
        if count < 2:
            raise ValueError("training-mode batch norm needs >= 2 elements per channel")
        mean_re = x.real.mean(dims)
        mean_im = x.imag.mean(dims)
        cre = x.real - view(mean_re)
        cim = x.imag - view(mean_im)
        vrr = (cre * cre).mean(dims)
        vii = (cim * cim).mean(dims)
        vri = (cre * cim).mean(dims)
        with torch.no_grad():
            keep = bn.momentum
            bn.running_mean_re.mul_(keep).add_(mean_re.detach(), alpha=1 - keep)
            bn.running_mean_im.mul_(keep).add_(mean_im.detach(), alpha=1 - keep)
            bn.running_vrr.mul_(keep).add_(vrr.detach(), alpha=1 - keep)
            bn.running_vri.mul_(keep).add_(vri.detach(), alpha=1 - keep)
            bn.running_vii.mul_(keep).add_(vii.detach(), alpha=1 - keep)
    else:
        cre = x.real - view(bn.running_mean_re)
        cim = x.imag - view(bn.running_mean_im)
        vrr, vri, vii = bn.running_vrr, bn.running_vri, bn.running_vii

    # inverse square root of [[vrr+eps, vri], [vri, vii+eps]] in closed form
    vrr = vrr + bn.eps
    vii = vii + bn.eps
    det = vrr * vii - vri * vri
    s = torch.sqrt(det)
    t = torch.sqrt(vrr + vii + 2.0 * s)
    inv = 1.0 / (s * t)
    wrr = (vii + s) * inv
    wii = (vrr + s) * inv
    wri = -vri * inv

    xr = view(wrr) * cre + view(wri) * cim
    xi = view(wri) * cre + view(wii) * cim

    out_re = view(bn.gamma_rr) * xr + view(bn.gamma_ri) * xi + view(bn.beta_re)
    out_im = view(bn.gamma_ri) * xr + view(bn.gamma_ii) * xi + view(bn.beta_im)
    return ComplexTensor(out_re, out_im)


def backward(loss: torch.Tensor, params: dict) -> dict:
    """Reverse-mode gradients of a scalar loss for every named tensor."""
    if loss.numel() != 1:
        raise ValueError("loss must be a scalar")
    names = list(params)
    grads = torch.autograd.grad(loss, [params[n] for n in names])
    return dict(zip(names, grads))
