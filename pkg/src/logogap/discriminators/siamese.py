"""Embedding-based logo matcher on a pre-activation residual backbone.

The backbone ends in global average pooling, producing one embedding per
logo. Brand identification compares that embedding against per-brand
exemplar embeddings by cosine similarity. A hardened variant swaps every
rectifier for a quantized step activation, which flattens the loss surface
an attacker can exploit through gradients.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


def step_relu(x, alpha: float):
    """max(0, alpha * ceil(x / alpha)), elementwise.

    Outputs lie on the lattice {0, alpha, 2*alpha, ...}; zero for x <= 0.
    Accepts scalars, numpy arrays, and torch tensors.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if isinstance(x, torch.Tensor):
        return torch.clamp_min(alpha * torch.ceil(x / alpha), 0.0)
    if isinstance(x, np.ndarray):
        return np.maximum(0.0, alpha * np.ceil(x / alpha))
    return max(0.0, alpha * math.ceil(x / alpha))


class _StepReluFn(torch.autograd.Function):
    # forward is the exact step formula; backward is the rectifier gradient
    # (straight-through), since the step itself has zero gradient a.e.
    @staticmethod
    def forward(ctx, x, alpha):
        ctx.save_for_backward(x)
        return torch.clamp_min(alpha * torch.ceil(x / alpha), 0.0)

    @staticmethod
    def backward(ctx, grad_out):
        (x,) = ctx.saved_tensors
        return grad_out * (x > 0), None


class StepReLU(nn.Module):
    def __init__(self, alpha: float = 0.1):
        super().__init__()
        if alpha <= 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        self.alpha = alpha

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return _StepReluFn.apply(x, self.alpha)

    def extra_repr(self) -> str:
        return f"alpha={self.alpha}"


def _norm(ch: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(32, ch), ch)


class PreActBasicBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int, act):
        super().__init__()
        self.norm1 = _norm(in_ch)
        self.act1 = act()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride, 1, bias=False)
        self.norm2 = _norm(out_ch)
        self.act2 = act()
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, 1, 1, bias=False)
        self.shortcut = None
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Conv2d(in_ch, out_ch, 1, stride, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.act1(self.norm1(x))
        out = self.conv1(h)
        out = self.conv2(self.act2(self.norm2(out)))
        sc = x if self.shortcut is None else self.shortcut(h)
        return out + sc


class PreActBottleneck(nn.Module):
    expansion = 4

    def __init__(self, in_ch: int, width: int, stride: int, act):
        super().__init__()
        out_ch = width * self.expansion
        self.norm1 = _norm(in_ch)
        self.act1 = act()
        self.conv1 = nn.Conv2d(in_ch, width, 1, bias=False)
        self.norm2 = _norm(width)
        self.act2 = act()
        self.conv2 = nn.Conv2d(width, width, 3, stride, 1, bias=False)
        self.norm3 = _norm(width)
        self.act3 = act()
        self.conv3 = nn.Conv2d(width, out_ch, 1, bias=False)
        self.shortcut = None
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Conv2d(in_ch, out_ch, 1, stride, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.act1(self.norm1(x))
        out = self.conv1(h)
        out = self.conv2(self.act2(self.norm2(out)))
        out = self.conv3(self.act3(self.norm3(out)))
        sc = x if self.shortcut is None else self.shortcut(h)
        return out + sc


class EmbeddingBackbone(nn.Module):
    """Residual backbone -> global average pooling -> embedding vector.

    `embed` returns the pooled embedding; `forward` adds the classification
    head used during training.
    """

    def __init__(self, k: int, widths: tuple[int, ...], blocks: tuple[int, ...],
                 bottleneck: bool, hardened: bool = False, step_alpha: float = 0.1):
        super().__init__()
        self.hardened = hardened
        self.step_alpha = step_alpha
        act = (lambda: StepReLU(step_alpha)) if hardened else nn.ReLU
        block_cls = PreActBottleneck if bottleneck else PreActBasicBlock
        expansion = block_cls.expansion if bottleneck else 1

        stem_ch = widths[0]
        self.stem = nn.Sequential(
            nn.Conv2d(3, stem_ch, 7, 2, 3, bias=False),
            nn.MaxPool2d(3, 2, 1),
        )
        layers = []
        in_ch = stem_ch
        for stage, (w, n) in enumerate(zip(widths, blocks)):
            for i in range(n):
                stride = 2 if (i == 0 and stage > 0) else 1
                layers.append(block_cls(in_ch, w, stride, act))
                in_ch = w * expansion
        self.body = nn.Sequential(*layers)
        self.final_norm = _norm(in_ch)
        self.final_act = act()
        self.embedding_dim = in_ch
        self.head = nn.Linear(in_ch, k)

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        x = x * 2.0 - 1.0
        h = self.body(self.stem(x))
        h = self.final_act(self.final_norm(h))
        return h.mean(dim=(2, 3))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.embed(x))


SIAMESE_PROFILES = {
    "paper": dict(widths=(64, 128, 256, 512), blocks=(3, 4, 6, 3), bottleneck=True),
    "mini": dict(widths=(16, 32, 64, 128), blocks=(1, 1, 1, 1), bottleneck=False),
}


def mean_brand_embeddings(model: EmbeddingBackbone, images_by_brand: dict[int, torch.Tensor],
                          batch_size: int = 32) -> np.ndarray:
    """Exemplar embeddings: the mean embedding of each brand's training logos."""
    model.eval()
    k = len(images_by_brand)
    out = np.zeros((k, model.embedding_dim), dtype=np.float32)
    with torch.no_grad():
        for brand_id in sorted(images_by_brand):
            batch = images_by_brand[brand_id]
            embs = []
            for start in range(0, batch.shape[0], batch_size):
                embs.append(model.embed(batch[start:start + batch_size]))
            out[brand_id] = torch.cat(embs).mean(dim=0).numpy()
    return out
