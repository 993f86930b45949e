"""Regenerate the committed golden files under tests/golden/.

The object render is produced by the naive reference renderer so that the
golden bytes are anchored to the oracle path; the render CLI (tiled path)
must reproduce them byte for byte. Run from the repository root:

    python3 tests/make_golden.py
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from gsedit.editing import place_asset, quantize_image
from gsedit.gaussians import composite_over_white, render_naive, save_asset
from gsedit.imgio import atomic_write_bytes, mask_to_png_array, write_pfm, write_png
from gsedit.layout import Box3D, ObjectClass, ObjectTrack, SceneLayout, \
    render_depth_boxes, render_edge_mask
from gsedit.scene_io import save_scene
from gsedit.synthetic import driving_camera, procedural_car

GOLDEN = Path(__file__).parent / "golden"


def golden_layout() -> SceneLayout:
    cam = driving_camera((0.0, 0.0, 1.6), 0, "front", fx=120.0, width=128, height=96)
    tracks = [
        ObjectTrack("car", ObjectClass.VEHICLE,
                    {0: Box3D(np.array([15.0, -1.0, 0.75]),
                              np.array([4.2, 1.9, 1.5]), 0.3)}),
        ObjectTrack("other", ObjectClass.VEHICLE,
                    {0: Box3D(np.array([22.0, 2.5, 0.9]),
                              np.array([4.6, 1.8, 1.6]), -0.2)}),
    ]
    return SceneLayout(num_frames=1, cameras={(0, "front"): cam}, tracks=tracks)


def main() -> None:
    GOLDEN.mkdir(exist_ok=True)
    layout = golden_layout()
    save_scene(GOLDEN / "scene.json", layout)
    car = procedural_car(150, seed=42)
    atomic_write_bytes(GOLDEN / "car.ply", save_asset(car))

    cam = layout.camera(0, "front")
    placed = place_asset(car, layout.track("car").boxes[0])
    vg = quantize_image(composite_over_white(render_naive(placed, cam)))
    write_png(GOLDEN / "vg.png", vg)
    write_pfm(GOLDEN / "db.pfm", render_depth_boxes(layout, 0, "front").astype(np.float32))
    write_png(GOLDEN / "mb.png", mask_to_png_array(render_edge_mask(layout, 0, "front")))
    print(f"wrote golden files to {GOLDEN}")


if __name__ == "__main__":
    main()
