"""Hierarchical windowed-attention transformer classifier.

The input is split into 4x4 patches and processed by four stages; blocks
alternate window-based self-attention with the shifted-window variant that
adds cross-window connections. Each stage merges patches, halving spatial
size and doubling channels, so a 224 input traverses 56 -> 28 -> 14 -> 7.
The pooled 7x7 feature map feeds a fully connected head over the k brands.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from ..dataset import IMAGE_SIZE


class WindowAttention(nn.Module):
    """Multi-head self-attention inside non-overlapping windows with a
    learned relative position bias."""

    def __init__(self, dim: int, heads: int, window: int):
        super().__init__()
        self.dim = dim
        self.heads = heads
        self.window = window
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)
        self.rel_bias = nn.Parameter(torch.zeros((2 * window - 1) ** 2, heads))
        coords = torch.stack(torch.meshgrid(torch.arange(window), torch.arange(window),
                                            indexing="ij"))
        flat = coords.flatten(1)
        rel = flat[:, :, None] - flat[:, None, :]
        rel = rel.permute(1, 2, 0)
        rel[:, :, 0] += window - 1
        rel[:, :, 1] += window - 1
        rel[:, :, 0] *= 2 * window - 1
        self.register_buffer("rel_index", rel.sum(-1), persistent=False)
        nn.init.trunc_normal_(self.rel_bias, std=0.02)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        # x: (num_windows*B, window*window, dim)
        bw, n, c = x.shape
        qkv = self.qkv(x).reshape(bw, n, 3, self.heads, c // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q @ k.transpose(-2, -1)) * self.scale
        bias = self.rel_bias[self.rel_index.view(-1)].view(n, n, -1).permute(2, 0, 1)
        attn = attn + bias.unsqueeze(0)
        if mask is not None:
            nw = mask.shape[0]
            attn = attn.view(bw // nw, nw, self.heads, n, n) + mask.unsqueeze(1).unsqueeze(0)
            attn = attn.view(bw, self.heads, n, n)
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(bw, n, c)
        return self.proj(out)


def window_partition(x: torch.Tensor, window: int) -> torch.Tensor:
    b, h, w, c = x.shape
    x = x.view(b, h // window, window, w // window, window, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, window * window, c)


def window_reverse(windows: torch.Tensor, window: int, h: int, w: int) -> torch.Tensor:
    c = windows.shape[-1]
    b = windows.shape[0] // (h * w // window // window)
    x = windows.view(b, h // window, w // window, window, window, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(b, h, w, c)


class SwinBlock(nn.Module):
    """One encoder block; shift_size > 0 selects the shifted-window variant.

    With shift_size == 0 the block computes plain window attention: no cyclic
    roll is applied and no attention mask is used.
    """

    def __init__(self, dim: int, heads: int, resolution: int, window: int = 7,
                 shift_size: int = 0, mlp_ratio: float = 4.0):
        super().__init__()
        if resolution % window != 0:
            raise ValueError(f"resolution {resolution} not divisible by window {window}")
        self.resolution = resolution
        self.window = window
        self.shift_size = shift_size
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, heads, window)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))
        self.register_buffer("attn_mask", self._build_mask(), persistent=False)

    def _build_mask(self) -> torch.Tensor | None:
        if self.shift_size == 0:
            return None
        r, w, s = self.resolution, self.window, self.shift_size
        img_mask = torch.zeros(1, r, r, 1)
        cnt = 0
        for hs in (slice(0, -w), slice(-w, -s), slice(-s, None)):
            for ws in (slice(0, -w), slice(-w, -s), slice(-s, None)):
                img_mask[:, hs, ws, :] = cnt
                cnt += 1
        mask_windows = window_partition(img_mask, w).squeeze(-1)
        diff = mask_windows.unsqueeze(1) - mask_windows.unsqueeze(2)
        return diff.masked_fill(diff != 0, float(-100.0)).masked_fill(diff == 0, 0.0)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (B, resolution*resolution, dim)
        b, n, c = x.shape
        r = self.resolution
        shortcut = x
        h = self.norm1(x).view(b, r, r, c)
        if self.shift_size > 0:
            h = torch.roll(h, shifts=(-self.shift_size, -self.shift_size), dims=(1, 2))
        windows = window_partition(h, self.window)
        windows = self.attn(windows, self.attn_mask)
        h = window_reverse(windows, self.window, r, r)
        if self.shift_size > 0:
            h = torch.roll(h, shifts=(self.shift_size, self.shift_size), dims=(1, 2))
        x = shortcut + h.view(b, n, c)
        return x + self.mlp(self.norm2(x))


class PatchMerging(nn.Module):
    def __init__(self, dim: int, resolution: int):
        super().__init__()
        self.resolution = resolution
        self.norm = nn.LayerNorm(4 * dim)
        self.reduction = nn.Linear(4 * dim, 2 * dim, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, c = x.shape
        r = self.resolution
        x = x.view(b, r, r, c)
        x = torch.cat([x[:, 0::2, 0::2], x[:, 1::2, 0::2],
                       x[:, 0::2, 1::2], x[:, 1::2, 1::2]], dim=-1)
        x = x.view(b, (r // 2) * (r // 2), 4 * c)
        return self.reduction(self.norm(x))


class WindowTransformerClassifier(nn.Module):
    def __init__(self, k: int, image_size: int = IMAGE_SIZE, patch_size: int = 4,
                 embed_dim: int = 96, depths: tuple[int, ...] = (2, 2, 18, 2),
                 heads: tuple[int, ...] = (3, 6, 12, 24), window: int = 7):
        super().__init__()
        if image_size % patch_size != 0:
            raise ValueError(f"image size {image_size} not divisible by patch size {patch_size}")
        self.patch_embed = nn.Conv2d(3, embed_dim, kernel_size=patch_size, stride=patch_size)
        self.embed_norm = nn.LayerNorm(embed_dim)
        resolution = image_size // patch_size
        dim = embed_dim
        stages = []
        for stage_idx, (depth, n_heads) in enumerate(zip(depths, heads)):
            blocks = []
            for i in range(depth):
                blocks.append(SwinBlock(dim, n_heads, resolution, window=window,
                                        shift_size=0 if i % 2 == 0 else window // 2))
            stages.append(nn.ModuleList(blocks))
            if stage_idx < len(depths) - 1:
                stages.append(PatchMerging(dim, resolution))
                dim *= 2
                resolution //= 2
        self.stages = nn.ModuleList(stages)
        self.final_resolution = resolution
        self.norm = nn.LayerNorm(dim)
        self.head = nn.Linear(dim, k)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x * 2.0 - 1.0
        t = self.patch_embed(x).flatten(2).transpose(1, 2)
        t = self.embed_norm(t)
        for stage in self.stages:
            if isinstance(stage, PatchMerging):
                t = stage(t)
            else:
                for blk in stage:
                    t = blk(t)
        t = self.norm(t)
        return self.head(t.mean(dim=1))


SWIN_PROFILES = {
    "paper": dict(patch_size=4, embed_dim=96, depths=(2, 2, 18, 2), heads=(3, 6, 12, 24)),
    "mini": dict(patch_size=4, embed_dim=24, depths=(1, 1, 2, 1), heads=(1, 2, 4, 8)),
}
