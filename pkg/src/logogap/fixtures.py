"""Synthetic desk-scale logo corpus.

Each protected brand gets a stable identity: an evenly spaced base hue, an
emblem of two or three shapes, and a wordmark-like bar row with brand-specific
segment widths. Individual images jitter position, scale, rotation and
background so a brand forms a recognizable but non-degenerate cluster.
Unprotected images come from the same drawing family with free palettes and
layouts, mirroring a disjoint logo collection. Generation is fully determined
by the seed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .dataset import Brand, BrandRegistry

SHAPES = ("circle", "ring", "square", "diamond", "triangle", "bar", "cross", "dot_row")
CANVAS = 224
SUPER = 2  # draw at 2x and reduce for soft edges


def _hsv_to_rgb(h: float, s: float, v: float) -> tuple[int, int, int]:
    i = int(h * 6.0) % 6
    f = h * 6.0 - int(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    r, g, b = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]
    return int(r * 255), int(g * 255), int(b * 255)


def _rot_poly(points, cx: float, cy: float, rot: float):
    c, s = np.cos(rot), np.sin(rot)
    return [(cx + x * c - y * s, cy + x * s + y * c) for x, y in points]


def _draw_shape(draw: ImageDraw.ImageDraw, shape: str, cx: float, cy: float,
                r: float, color: tuple[int, int, int], rot: float) -> None:
    if shape == "circle":
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=color)
    elif shape == "ring":
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], outline=color,
                     width=max(2, int(r * 0.35)))
    elif shape == "square":
        draw.polygon(_rot_poly([(-r, -r), (r, -r), (r, r), (-r, r)], cx, cy, rot),
                     fill=color)
    elif shape == "diamond":
        draw.polygon(_rot_poly([(0, -r), (r, 0), (0, r), (-r, 0)], cx, cy, rot),
                     fill=color)
    elif shape == "triangle":
        draw.polygon(_rot_poly([(0, -r), (r * 0.9, r * 0.7), (-r * 0.9, r * 0.7)],
                               cx, cy, rot), fill=color)
    elif shape == "bar":
        draw.polygon(_rot_poly([(-r, -r * 0.3), (r, -r * 0.3), (r, r * 0.3),
                                (-r, r * 0.3)], cx, cy, rot), fill=color)
    elif shape == "cross":
        w = r * 0.32
        draw.polygon(_rot_poly([(-w, -r), (w, -r), (w, r), (-w, r)], cx, cy, rot),
                     fill=color)
        draw.polygon(_rot_poly([(-r, -w), (r, -w), (r, w), (-r, w)], cx, cy, rot),
                     fill=color)
    elif shape == "dot_row":
        for i in (-1, 0, 1):
            draw.ellipse([cx + i * 0.75 * r - r / 3, cy - r / 3,
                          cx + i * 0.75 * r + r / 3, cy + r / 3], fill=color)
    else:
        raise ValueError(f"unknown shape {shape!r}")


def _render(rng: np.random.Generator, bg: tuple[int, int, int], elements: list[dict],
            wordmark: dict, noise: float) -> np.ndarray:
    size = CANVAS * SUPER
    im = Image.new("RGB", (size, size), bg)
    draw = ImageDraw.Draw(im)
    for el in elements:
        _draw_shape(draw, el["shape"], el["cx"] * size, el["cy"] * size,
                    el["r"] * size, el["color"], el["rot"])
    # wordmark: a row of bars whose widths carry most of the identity
    x = wordmark["x0"] * size
    y = wordmark["y"] * size
    h = wordmark["height"] * size
    for w in wordmark["widths"]:
        bw = w * size
        draw.rectangle([x, y - h / 2, x + bw, y + h / 2], fill=wordmark["color"])
        x += bw + wordmark["gap"] * size
    im = im.resize((CANVAS, CANVAS), Image.BILINEAR)
    arr = np.asarray(im).astype(np.int16)
    if noise > 0:
        arr = arr + rng.normal(0.0, noise * 255.0, arr.shape)
    return np.clip(arr, 0, 255).astype(np.uint8)


def _brand_style(rng: np.random.Generator, brand_idx: int, total_brands: int) -> dict:
    # brands come in same-hue pairs so identification cannot rely on color
    # alone; pair members are told apart by emblem shapes and wordmark
    n_groups = max((total_brands + 1) // 2, 1)
    hue = ((brand_idx // 2) + rng.uniform(0.0, 0.25)) / n_groups
    shapes = list(rng.permutation(len(SHAPES))[:3])
    if brand_idx % 2 == 1:  # disjoint emblem shapes from the pair mate
        shapes = [(s + 4) % len(SHAPES) for s in shapes]
    return _style(rng, hue=hue, shapes=[SHAPES[s] for s in shapes])


def _free_style(rng: np.random.Generator) -> dict:
    n = int(rng.integers(1, 5))
    shapes = [SHAPES[int(rng.integers(0, len(SHAPES)))] for _ in range(n)]
    return _style(rng, hue=rng.uniform(), shapes=shapes)


def _style(rng: np.random.Generator, hue: float, shapes: list[str]) -> dict:
    primary = _hsv_to_rgb(hue, 0.85, 0.85)
    secondary = _hsv_to_rgb((hue + rng.uniform(0.3, 0.7)) % 1.0, 0.75, 0.8)
    layout = []
    for j, shape in enumerate(shapes):
        layout.append({
            "shape": shape,
            "cx": rng.uniform(0.28, 0.72),
            "cy": rng.uniform(0.22, 0.55),
            "r": rng.uniform(0.12, 0.24),
            "color": primary if j % 2 == 0 else secondary,
            "rot": rng.uniform(0, 2 * np.pi),
        })
    widths = rng.uniform(0.02, 0.07, size=6)
    x0 = 0.5 - (widths.sum() + 5 * 0.015) / 2
    wordmark = {"x0": float(x0), "y": 0.8, "height": 0.06, "gap": 0.015,
                "widths": [float(w) for w in widths], "color": primary}
    return {"bg_v": rng.uniform(0.88, 1.0), "layout": layout, "wordmark": wordmark}


def _jittered(rng: np.random.Generator, style: dict
              ) -> tuple[tuple[int, int, int], list[dict], dict]:
    v = float(np.clip(style["bg_v"] + rng.uniform(-0.04, 0.04), 0.0, 1.0))
    bg = (int(v * 255),) * 3
    dx, dy = rng.uniform(-0.02, 0.02, size=2)
    scale = rng.uniform(0.92, 1.08)
    elements = []
    for el in style["layout"]:
        elements.append({
            "shape": el["shape"],
            "cx": float(np.clip(el["cx"] + dx + rng.uniform(-0.015, 0.015), 0.08, 0.92)),
            "cy": float(np.clip(el["cy"] + dy + rng.uniform(-0.015, 0.015), 0.08, 0.92)),
            "r": float(el["r"] * scale * rng.uniform(0.95, 1.05)),
            "color": el["color"],
            "rot": float(el["rot"] + rng.uniform(-0.15, 0.15)),
        })
    wm = dict(style["wordmark"])
    wm["x0"] = float(np.clip(wm["x0"] + dx, 0.05, 0.6))
    wm["y"] = float(wm["y"] + dy)
    wm["widths"] = [float(w * scale) for w in wm["widths"]]
    return bg, elements, wm


def build_fixture_corpus(out_dir: str | Path, brands: int = 12, images_per_brand: int = 40,
                         unprotected: int = 300, seed: int = 1,
                         force: bool = False) -> Path:
    """Write a synthetic corpus plus registry JSON; deterministic per seed.

    Layout: one directory per protected brand (registered), plus an
    `unprotected/` directory whose images stay outside the registry. Returns
    the registry path. Refuses to write into a nonempty directory unless
    `force` is set.
    """
    if brands < 1 or images_per_brand < 1 or unprotected < 0:
        raise ValueError("brands and images_per_brand must be >= 1, unprotected >= 0")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if any(out.iterdir()) and not force:
        raise FileExistsError(f"{out} is not empty; pass force=True to overwrite")

    rng = np.random.default_rng(seed)
    brand_entries = []
    for b in range(brands):
        style = _brand_style(rng, b, brands)
        dirname = f"brand_{b:02d}"
        bdir = out / dirname
        bdir.mkdir(exist_ok=True)
        for i in range(images_per_brand):
            bg, elements, wm = _jittered(rng, style)
            arr = _render(rng, bg, elements, wm, noise=0.01)
            Image.fromarray(arr).save(bdir / f"logo_{i:03d}.png")
        brand_entries.append(Brand(brand_id=b, name=f"brand-{b:02d}", dirname=dirname,
                                   domains=(f"brand{b:02d}.example",)))

    udir = out / "unprotected"
    udir.mkdir(exist_ok=True)
    for i in range(unprotected):
        style = _free_style(rng)
        bg, elements, wm = _jittered(rng, style)
        arr = _render(rng, bg, elements, wm, noise=0.01)
        Image.fromarray(arr).save(udir / f"logo_{i:04d}.png")

    registry = BrandRegistry(tuple(brand_entries))
    registry_path = out / "registry.json"
    registry.to_json(registry_path)
    return registry_path
