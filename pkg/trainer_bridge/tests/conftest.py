from __future__ import annotations

import json
import struct
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest


def run_producer(*args: str) -> None:
    """Invoke the bundle producer through its CLI only."""
    subprocess.run([sys.executable, "-m", "gsedit.cli", *args], check=True,
                   capture_output=True)


@pytest.fixture(scope="session")
def bundle_dirs(tmp_path_factory) -> list[Path]:
    """Golden bundles produced by the external CLI: one per demo edit."""
    root = tmp_path_factory.mktemp("producer")
    inputs = root / "inputs"
    bundles = root / "bundles"
    run_producer("demo", "--out", str(inputs), "--gaussians", "300")
    run_producer("edit", str(inputs / "scene.json"), str(inputs / "edits.json"),
                 str(inputs / "assets"), "--out-dir", str(bundles), "--seed", "5")
    dirs = sorted(p for p in bundles.iterdir() if p.is_dir())
    assert len(dirs) == 5
    return dirs


@pytest.fixture(scope="session")
def golden_bundle(bundle_dirs) -> Path:
    return bundle_dirs[0]


@pytest.fixture(scope="session")
def delete_bundle(bundle_dirs) -> Path:
    (d,) = [p for p in bundle_dirs if "delete" in p.name]
    return d


# --- tiny writers for hand-built fixtures (independent of any producer) -----

def write_png(path: Path, arr: np.ndarray) -> None:
    from PIL import Image

    mode = "L" if arr.ndim == 2 else "RGB"
    Image.fromarray(arr.astype(np.uint8), mode).save(path, format="PNG")


def write_pfm(path: Path, depth: np.ndarray) -> None:
    d = np.asarray(depth, dtype="<f4")
    h, w = d.shape
    path.write_bytes(f"Pf\n{w} {h}\n-1.0\n".encode("ascii") + d[::-1].tobytes())


def write_tensor(path: Path, arr: np.ndarray, names: list[str]) -> None:
    header = json.dumps({"dtype": "f32", "shape": list(arr.shape),
                         "channel_names": names}, sort_keys=True).encode()
    path.write_bytes(b"GSETNSR1" + struct.pack("<I", len(header)) + header
                     + np.ascontiguousarray(arr, dtype="<f4").tobytes())
