"""Frame files: raw float32 arrays with a JSON sidecar, and 8-bit PNG previews."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
from PIL import Image


def to_uint8(img) -> np.ndarray:
    """Quantize ``[0, 1]`` floats to bytes, rounding half up."""
    return np.floor(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_png(img, path) -> None:
    Image.fromarray(to_uint8(img), mode="RGB").save(path)


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def save_f32(img, path) -> None:
    """Write an ``(H, W, C)`` image as little-endian float32 plus a ``.json`` sidecar."""
    arr = np.ascontiguousarray(np.asarray(img, dtype="<f4"))
    if arr.ndim != 3:
        raise ValueError(f"expected an (H, W, C) image, got shape {arr.shape}")
    path = Path(path)
    path.write_bytes(arr.tobytes())
    h, w, c = arr.shape
    path.with_suffix(".json").write_text(json.dumps({"height": h, "width": w, "channels": c}))


def load_f32(path) -> np.ndarray:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    shape = (meta["height"], meta["width"], meta["channels"])
    return np.frombuffer(path.read_bytes(), dtype="<f4").reshape(shape).astype(np.float32)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
