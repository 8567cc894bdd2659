"""Receptive-field arithmetic for layer chains and gradient-based ERF maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Layer:
    kernel: int
    stride: int = 1
    dilation: int = 1
    name: str = ""


def rf_chain(chain) -> list[int]:
    """Receptive-field size after every layer of ``chain``.

    The first layer gives ``r0 = df0 (k0 - 1) + 1``; each later layer adds
    ``df (k - 1)`` times the product of the strides of all layers before it.
    """
    chain = [c if isinstance(c, Layer) else Layer(*c) for c in chain]
    if not chain:
        raise ValueError("empty layer chain")
    for c in chain:
        if min(c.kernel, c.stride, c.dilation) < 1:
            raise ValueError(f"invalid layer {c}")
    first = chain[0]
    r = first.dilation * (first.kernel - 1) + 1
    jump = first.stride
    sizes = [r]
    for c in chain[1:]:
        r += c.dilation * (c.kernel - 1) * jump
        jump *= c.stride
        sizes.append(r)
    return sizes


def convnext_t_chain(block_kernel: int = 7) -> list[Layer]:
    """Stem, four stages (3, 3, 9, 3 blocks) and the three downsampling layers.

    Only the spatial mixing layer of each block matters; the pointwise layers
    have k = 1.
    """
    chain = [Layer(4, 4, name="stem")]
    for stage, depth in enumerate((3, 3, 9, 3)):
        if stage:
            chain.append(Layer(2, 2, name="downsample"))
        chain += [Layer(block_kernel, name=f"stage{stage}.block{b}") for b in range(depth)]
    return chain


NAMED_CHAINS = {
    "convnext-t": lambda: convnext_t_chain(7),
    "convnext-t-dcls17": lambda: convnext_t_chain(17),
    "convnext-t-dcls23": lambda: convnext_t_chain(23),
}


def parse_chain(text: str) -> list[Layer]:
    """Parse ``"k,s[,df];k,s[,df];..."`` into layers."""
    layers = []
    for i, part in enumerate(p for p in text.split(";") if p.strip()):
        nums = [int(v) for v in part.split(",")]
        if not 1 <= len(nums) <= 3:
            raise ValueError(f"bad layer spec {part!r}")
        layers.append(Layer(*nums, name=f"layer{i}"))
    return layers


def rf_table(chain) -> list[tuple[str, int]]:
    chain = [c if isinstance(c, Layer) else Layer(*c) for c in chain]
    return [(c.name or f"layer{i}", r) for i, (c, r) in enumerate(zip(chain, rf_chain(chain)))]


def erf_estimate(model, inputs, normalize: bool = True) -> np.ndarray:
    """Mean |d(centre output) / d(input)| over a batch, scaled to [0, 1].

    ``model`` must provide ``forward(x)`` and ``backward(grad_out)`` returning
    the input gradient.  Channels are summed for both output and input.
    """
    if not (callable(getattr(model, "forward", None)) and callable(getattr(model, "backward", None))):
        raise TypeError("model has no gradient path (needs forward and backward)")
    x = np.asarray(inputs, dtype=np.float64)
    y = model.forward(x)
    g = np.zeros_like(y)
    centre = tuple(s // 2 for s in y.shape[2:])
    g[(slice(None), slice(None)) + centre] = 1.0
    gx = model.backward(g)
    if gx is None:
        raise TypeError("model backward returned no input gradient")
    heat = np.abs(gx).sum(axis=1).mean(axis=0)
    if normalize and heat.max() > 0:
        heat = heat / heat.max()
    return heat
