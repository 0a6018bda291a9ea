#!/usr/bin/env python3
"""Regenerates the committed test fixtures in data/.

The 256x256 gray/color pair is fully deterministic (fixed seed); the 3-splat
scene and camera are written as plain files. The golden render is produced
separately by `isosplat render3d` and committed alongside.
"""
import json
import struct
import numpy as np
from PIL import Image

W = H = 256
rng = np.random.default_rng(20240901)

yy, xx = np.meshgrid(np.arange(H) + 0.5, np.arange(W) + 0.5, indexing="ij")


def blob(cx, cy, s):
    return np.exp(-(((xx - cx) ** 2 + (yy - cy) ** 2) / (s * s)))


def soft_disk(cx, cy, r, w):
    d = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
    return 1.0 / (1.0 + np.exp((d - r) / w))


def soft_band(a, b, c, w):
    d = (a * xx + b * yy + c) / np.hypot(a, b)
    return 1.0 / (1.0 + np.exp(d / w))


def smooth_noise(amplitude, cell):
    coarse = rng.standard_normal((H // cell, W // cell))
    img = np.kron(coarse, np.ones((cell, cell)))
    # separable box blur to kill the blocking
    k = np.ones(cell) / cell
    img = np.apply_along_axis(lambda r: np.convolve(r, k, mode="same"), 1, img)
    img = np.apply_along_axis(lambda r: np.convolve(r, k, mode="same"), 0, img)
    return amplitude * img


r = 0.30 + 0.25 * (xx / W) + 0.10 * (yy / H)
g = 0.35 + 0.20 * (yy / H) - 0.08 * (xx / W)
b = 0.45 - 0.12 * (xx / W) + 0.18 * ((xx - 128) * (yy - 128)) / (128.0 * 128.0 * 4)

r = r + 0.35 * blob(70, 60, 38) - 0.22 * blob(190, 180, 55)
g = g + 0.30 * blob(185, 75, 30) + 0.18 * blob(60, 200, 46)
b = b + 0.32 * blob(120, 150, 42) - 0.15 * blob(210, 40, 36)

disk = soft_disk(92, 168, 34, 2.0)
band = soft_band(1.0, -1.4, 120.0, 3.0)
r = r + 0.22 * disk - 0.10 * band
g = g - 0.12 * disk + 0.16 * band
b = b + 0.08 * disk + 0.10 * band

texture = smooth_noise(0.035, 8)
r, g, b = r + texture, g + texture * 0.8, b + texture * 0.6

color = np.stack([r, g, b], axis=-1)
color = np.clip(color, 0.02, 0.98)
gray = 0.2126 * color[..., 0] + 0.7152 * color[..., 1] + 0.0722 * color[..., 2]

Image.fromarray(np.uint8(np.floor(color * 255.0 + 0.5)), "RGB").save(
    "data/fixture_color_256.png"
)
Image.fromarray(np.uint8(np.floor(gray * 255.0 + 0.5)), "L").save(
    "data/fixture_gray_256.png"
)

# 3-splat scene on the optical axis (iso kernel kind, dimension 3) and a
# simple identity camera looking down +z.
splats = [
    # mu.xyz, sigma, color.rgb, opacity
    (0.0, 0.0, 2.0, 0.25, (1.0, 0.2, 0.1), 0.5),
    (0.35, -0.2, 3.0, 0.45, (0.2, 0.9, 0.3), 0.5),
    (-0.3, 0.25, 4.0, 0.9, (0.1, 0.3, 1.0), 1.0),
]
header = json.dumps(
    {
        "version": 1,
        "kernel_kind": "iso",
        "dimension": 3,
        "channels": 3,
        "count": len(splats),
        "metadata": {"name": "three_splats"},
    }
).encode()
with open("data/scene_three_splats.ispl", "wb") as f:
    f.write(b"ISPL")
    f.write(struct.pack("<I", len(header)))
    f.write(header)
    for mu_x, mu_y, mu_z, sigma, (cr, cg, cb), alpha in splats:
        f.write(struct.pack("<8d", mu_x, mu_y, mu_z, sigma, cr, cg, cb, alpha))

camera = {
    "rotation": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
    "translation": [0, 0, 0],
    "focal": 32,
    "principal_point": [16, 16],
    "image_size": [32, 32],
}
with open("data/camera_32.json", "w") as f:
    json.dump(camera, f, indent=2)
    f.write("\n")

print("fixtures written to data/")
