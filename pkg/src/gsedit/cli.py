"""Command-line entry points: render, edit, prep, eval, demo.

Exit codes: 0 success, 2 input parse failure, 3 render failure, 4 metrics
degenerate (no ground truth). Worker count is capped by the GSEDIT_THREADS
environment variable; outputs are byte-identical for a fixed seed
regardless of the worker count.
"""

from __future__ import annotations

import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import bundle_io, dataprep, scene_io, synthetic
from .editing import (
    AssetStore,
    ClipSpec,
    Delete,
    EditCommand,
    Insert,
    Reposition,
    apply_edit,
    build_bundle,
    describe_edit,
    edited_object_id,
    place_asset,
    quantize_image,
)
from .errors import GsEditError, NoGroundTruth, SceneFormatError
from .evalkit import Detection, EvalConfig, MatchSet, compute_metrics, match_frame
from .gaussians import composite_over_white, load_asset, render, save_asset
from .imgio import atomic_write_bytes, mask_to_png_array, read_png, write_pfm, write_png
from .layout import Box3D, ClipParams, ObjectClass, ObjectTrack, SceneLayout, \
    render_depth_boxes, render_edge_mask, select_clips

EXIT_PARSE = 2
EXIT_RENDER = 3
EXIT_EVAL = 4


def _fail(code: int, msg: str) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _load_scene(path: str, strict: bool) -> SceneLayout:
    try:
        return scene_io.load_scene(path, strict=strict)
    except (OSError, SceneFormatError) as e:
        _fail(EXIT_PARSE, f"scene {path}: {e}")


def _worker_count() -> int:
    env = os.environ.get("GSEDIT_THREADS", "")
    try:
        n = int(env) if env else (os.cpu_count() or 1)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


@click.group()
def main() -> None:
    """Gaussian-guided object editing for driving scenes."""


# --- render -----------------------------------------------------------------

@main.command("render")
@click.argument("scene", type=click.Path(exists=True))
@click.argument("asset", type=click.Path(exists=True))
@click.option("--frame", type=int, required=True)
@click.option("--camera", "camera_id", required=True)
@click.option("--object", "object_id", required=True,
              help="Object whose box the asset is placed into.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--asset-convention", type=click.Choice(["auto", "linear", "splat"]),
              default="auto", show_default=True)
@click.option("--strict", is_flag=True, help="Reject unknown scene fields.")
def cmd_render(scene, asset, frame, camera_id, object_id, out_dir, asset_convention, strict):
    """Write one frame's object render, depth boxes, and edge mask."""
    layout = _load_scene(scene, strict)
    try:
        cloud = load_asset(Path(asset).read_bytes(), convention=asset_convention)
    except (OSError, GsEditError) as e:
        _fail(EXIT_PARSE, f"asset {asset}: {e}")
    try:
        cam = layout.camera(frame, camera_id)
        box = layout.track(object_id).boxes.get(frame)
        if box is None:
            raise GsEditError(f"object {object_id!r} has no box in frame {frame}")
        placed = place_asset(cloud, box)
        vg = quantize_image(composite_over_white(render(placed, cam)))
        db = render_depth_boxes(layout, frame, camera_id).astype(np.float32)
        mb = render_edge_mask(layout, frame, camera_id)
    except GsEditError as e:
        _fail(EXIT_RENDER, str(e))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_png(out / "vg.png", vg)
    write_pfm(out / "db.pfm", db)
    write_png(out / "mb.png", mask_to_png_array(mb))
    click.echo(f"wrote {out}/vg.png, db.pfm, mb.png")


# --- edits file --------------------------------------------------------------

def parse_edits(text: str) -> list[EditCommand]:
    """Edits JSON: {"edits": [...]}. Reposition takes delta_yaw_deg (degrees,
    positive counter-clockwise) and delta_t_local meters; insert carries an
    inline track (object_id, class, boxes); delete names an object."""
    doc = json.loads(text)
    if not isinstance(doc, dict) or "edits" not in doc:
        raise SceneFormatError("edits file must be an object with an 'edits' list")
    cmds: list[EditCommand] = []
    for i, e in enumerate(doc["edits"]):
        kind = e.get("type")
        if kind == "reposition":
            cmds.append(Reposition(
                object_id=str(e["object_id"]),
                delta_yaw=math.radians(float(e.get("delta_yaw_deg", 0.0))),
                delta_t_local=np.array(e.get("delta_t_local", [0.0, 0.0, 0.0]), dtype=np.float64),
            ))
        elif kind == "insert":
            boxes = {int(b["frame"]): Box3D(np.array(b["center"], dtype=np.float64),
                                            np.array(b["dims"], dtype=np.float64),
                                            float(b["yaw"]))
                     for b in e["boxes"]}
            track = ObjectTrack(str(e["object_id"]), ObjectClass(e.get("class", "Vehicle")), boxes)
            cmds.append(Insert(asset_ref=str(e["asset_ref"]), track=track))
        elif kind == "delete":
            cmds.append(Delete(object_id=str(e["object_id"])))
        else:
            raise SceneFormatError(f"edits[{i}]: unknown type {kind!r}")
    return cmds


def load_asset_store(assets_dir: str | Path) -> AssetStore:
    """Assets directory: <name>.ply gaussian assets, optional
    <name>.reference.png square crops."""
    store = AssetStore()
    root = Path(assets_dir)
    for ply in sorted(root.glob("*.ply")):
        name = ply.stem
        ref_path = root / f"{name}.reference.png"
        reference = read_png(ref_path) if ref_path.exists() else None
        store.add(name, load_asset(ply.read_bytes()), reference)
    return store


def _source_frames(layout: SceneLayout, clip: ClipSpec, store: AssetStore,
                   frames_dir: str | None) -> list[np.ndarray]:
    """Original clip frames in [0, 1]: read from frames_dir
    (<camera>/<frame:04d>.png) when given, else a procedural backdrop with
    every asset-backed object rendered at its original pose."""
    frames = []
    for f in clip.frames:
        cam = layout.camera(f, clip.camera_id)
        if frames_dir is not None:
            path = Path(frames_dir) / clip.camera_id / f"{f:04d}.png"
            frames.append(read_png(path).astype(np.float64) / 255.0)
            continue
        img = synthetic.render_background(cam)
        for track in sorted(layout.tracks, key=lambda t: t.object_id):
            if not store.has_asset(track.object_id):
                continue
            box = track.boxes.get(f)
            if box is None:
                continue
            rendered = render(place_asset(store.asset(track.object_id), box), cam)
            img = rendered.rgb + (1.0 - rendered.alpha)[:, :, None] * img
        frames.append(np.clip(img, 0.0, 1.0))
    return frames


def _clip_id(edit_idx: int, cmd: EditCommand, clip: ClipSpec) -> str:
    kind = describe_edit(cmd)["type"]
    safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in clip.object_id)
    return f"{edit_idx:02d}-{kind}-{safe}-f{clip.start:03d}"


@main.command("edit")
@click.argument("scene", type=click.Path(exists=True))
@click.argument("edits", type=click.Path(exists=True))
@click.argument("assets_dir", type=click.Path(exists=True))
@click.option("--camera", "camera_id", default="front", show_default=True)
@click.option("--clip", "clip_policy", default="first", show_default=True,
              help="'first', 'all', or a window index into the clip list.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--frames-dir", type=click.Path(exists=True), default=None,
              help="Source video frames; procedural backdrop when omitted.")
@click.option("--n", "n_frames", type=int, default=10, show_default=True)
@click.option("--min-height", type=float, default=40.0, show_default=True)
@click.option("--augment-reference", is_flag=True,
              help="Apply seeded photometric augmentation to the reference.")
@click.option("--strict", is_flag=True)
def cmd_edit(scene, edits, assets_dir, camera_id, clip_policy, seed, out_dir,
             frames_dir, n_frames, min_height, augment_reference, strict):
    """Build conditioning bundles for every edit in the edits file."""
    layout = _load_scene(scene, strict)
    try:
        cmds = parse_edits(Path(edits).read_text())
        store = load_asset_store(assets_dir)
    except (OSError, json.JSONDecodeError, GsEditError, KeyError, ValueError) as e:
        _fail(EXIT_PARSE, f"edits/assets: {e}")

    params = ClipParams(n_frames=n_frames, min_height_px=min_height)
    jobs = []
    for edit_idx, cmd in enumerate(cmds):
        try:
            selection_layout = layout if isinstance(cmd, Delete) else apply_edit(layout, cmd)
            target = cmd.object_id if isinstance(cmd, Delete) else edited_object_id(cmd)
            windows = [(oid, start) for oid, start in
                       select_clips(selection_layout, camera_id, params) if oid == target]
        except GsEditError as e:
            _fail(EXIT_RENDER, f"edit {edit_idx}: {e}")
        if not windows:
            click.echo(f"edit {edit_idx}: no eligible clip window", err=True)
            continue
        if clip_policy == "first":
            windows = windows[:1]
        elif clip_policy != "all":
            try:
                windows = [windows[int(clip_policy)]]
            except (ValueError, IndexError):
                _fail(EXIT_PARSE, f"--clip {clip_policy!r} is not 'first', 'all', or a valid index")
        for clip_idx, (oid, start) in enumerate(windows):
            clip = ClipSpec(object_id=oid, start=start, num_frames=n_frames,
                            camera_id=camera_id)
            jobs.append((edit_idx, clip_idx, cmd, clip))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    failures = []

    # Source frames depend only on the clip window, not the edit; build each
    # distinct window once (sequentially, so results never depend on pool
    # scheduling).
    frame_cache: dict[tuple[str, int, int], list[np.ndarray]] = {}
    for _, _, _, clip in jobs:
        key = (clip.camera_id, clip.start, clip.num_frames)
        if key not in frame_cache:
            frame_cache[key] = _source_frames(layout, clip, store, frames_dir)

    def run(job):
        edit_idx, clip_idx, cmd, clip = job
        clip_seed = int(np.random.SeedSequence(seed, spawn_key=(edit_idx, clip_idx))
                        .generate_state(1)[0])
        frames = frame_cache[(clip.camera_id, clip.start, clip.num_frames)]
        bundle = build_bundle(layout, cmd, clip, store, frames)
        if augment_reference:
            ref01 = bundle.reference_image.astype(np.float64) / 255.0
            aug = dataprep.augment_reference(
                ref01, dataprep.AugmentParams((0.8, 1.2), (0.8, 1.2), (0.8, 1.2), 0.5),
                clip_seed)
            bundle = type(bundle)(bundle.gaussian_video, bundle.depth_boxes,
                                  bundle.edge_masks, bundle.inpaint_masks,
                                  bundle.masked_video, quantize_image(aug),
                                  bundle.clip_meta)
        bundle.clip_meta["seed"] = clip_seed
        bundle_io.write_bundle(out / _clip_id(edit_idx, cmd, clip), bundle)
        return _clip_id(edit_idx, cmd, clip)

    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        for job, result in zip(jobs, pool.map(lambda j: _guarded(run, j), jobs)):
            if isinstance(result, Exception):
                failures.append((job[0], result))
                click.echo(f"edit {job[0]} clip {job[1]}: {result}", err=True)
            else:
                click.echo(f"wrote {out / result}")
    if failures:
        sys.exit(EXIT_RENDER)


def _guarded(fn, job):
    try:
        return fn(job)
    except Exception as e:  # noqa: BLE001 - per-clip failures are reported, not fatal mid-pool
        return e


# --- prep ---------------------------------------------------------------------

@main.command("prep")
@click.argument("scene", type=click.Path(exists=True))
@click.option("--camera", "camera_id", default="front", show_default=True)
@click.option("--n", "n_frames", type=int, default=10, show_default=True)
@click.option("--min-height", type=float, default=40.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--ratio", type=float, default=0.2, show_default=True,
              help="Random object-free mask entries per selected clip.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--strict", is_flag=True)
def cmd_prep(scene, camera_id, n_frames, min_height, seed, ratio, out_path, strict):
    """Select training clip windows and write the clip manifest."""
    layout = _load_scene(scene, strict)
    params = ClipParams(n_frames=n_frames, min_height_px=min_height)
    clips = select_clips(layout, camera_id, params)
    entries = []
    for oid, start in clips:
        frames = list(range(start, start + n_frames))
        entries.append({
            "object_id": oid,
            "start_frame": start,
            "reference_frame": dataprep.pick_reference_frame(frames, start),
            "mask": {"pad_frac": dataprep.DEFAULT_PAD_FRAC,
                     "min_pad_px": dataprep.DEFAULT_MIN_PAD_PX},
        })
    rng = np.random.Generator(np.random.PCG64(seed))
    n_random = int(round(ratio * len(entries)))
    random_masks = []
    for i in range(n_random):
        frame = int(rng.integers(0, layout.num_frames)) if layout.num_frames else 0
        mask_seed = int(rng.integers(0, 2**63))
        if not layout.has_camera(frame, camera_id):
            continue
        try:
            rect = dataprep.sample_object_free_rect(layout, frame, camera_id, mask_seed)
        except GsEditError:
            continue
        random_masks.append({"frame": frame, "camera_id": camera_id,
                             "rect": list(rect), "seed": mask_seed})
    manifest = {
        "version": 1,
        "camera_id": camera_id,
        "params": {"n": n_frames, "min_height_px": min_height,
                   "max_neighbors": params.max_neighbors,
                   "neighbor_radius_m": params.neighbor_radius_m,
                   "random_mask_ratio": ratio, "seed": seed},
        "clips": entries,
        "random_masks": random_masks,
    }
    atomic_write_bytes(out_path, (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode())
    click.echo(f"wrote {out_path} ({len(entries)} clips, {len(random_masks)} random masks)")


# --- eval ---------------------------------------------------------------------

def parse_detections(text: str) -> list[dict]:
    rows = []
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            row = json.loads(line)
            det = {
                "frame_index": int(row["frame_index"]),
                "camera_id": str(row["camera_id"]),
                "center": np.array(row["center"], dtype=np.float64).reshape(3),
                "dims": np.array(row["dims"], dtype=np.float64).reshape(3),
                "yaw": float(row["yaw"]),
                "score": float(row["score"]),
                "class": ObjectClass(row.get("class", "Vehicle")),
            }
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as e:
            raise SceneFormatError(f"detections line {ln}: {e}") from None
        rows.append(det)
    return rows


@main.command("eval")
@click.argument("scene", type=click.Path(exists=True))
@click.argument("edits", type=click.Path(exists=True))
@click.argument("detections", type=click.Path(exists=True))
@click.option("--edit-index", type=int, default=None,
              help="Which edit defines the evaluated scenario (default: the only one).")
@click.option("--tol", type=float, default=0.05, show_default=True,
              help="Longitudinal error tolerance as a fraction of range.")
@click.option("--iou", type=float, default=0.5, show_default=True)
@click.option("--all-objects", is_flag=True,
              help="Evaluate against every object, not only the edited instance.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--strict", is_flag=True)
def cmd_eval(scene, edits, detections, edit_index, tol, iou, all_objects, out_path, strict):
    """Match detections against the edited ground truth and report metrics."""
    layout = _load_scene(scene, strict)
    try:
        cmds = parse_edits(Path(edits).read_text())
        rows = parse_detections(Path(detections).read_text())
    except (OSError, json.JSONDecodeError, GsEditError, KeyError, ValueError) as e:
        _fail(EXIT_PARSE, f"inputs: {e}")
    if edit_index is None:
        if len(cmds) != 1:
            _fail(EXIT_PARSE, f"edits file has {len(cmds)} edits; pass --edit-index")
        edit_index = 0
    if not (0 <= edit_index < len(cmds)):
        _fail(EXIT_PARSE, f"--edit-index {edit_index} out of range")
    cmd = cmds[edit_index]
    cfg = EvalConfig(lon_tolerance_frac=tol, iou_threshold=iou,
                     restrict_to_edited=not all_objects)

    edited = apply_edit(layout, cmd)
    if cfg.restrict_to_edited:
        try:
            gt_tracks = [edited.track(edited_object_id(cmd))]
        except GsEditError:
            gt_tracks = []
    else:
        gt_tracks = list(edited.tracks)

    cam_ids = {r["camera_id"] for r in rows}
    if len(cam_ids) > 1:
        _fail(EXIT_PARSE, f"detections span multiple cameras {sorted(cam_ids)}")
    camera_id = cam_ids.pop() if cam_ids else (edited.camera_ids() or [""])[0]

    sets: dict[str, MatchSet] = {}
    for track in gt_tracks:
        ms = MatchSet()
        for f in sorted(track.boxes):
            if not edited.has_camera(f, camera_id):
                continue
            cam = edited.camera(f, camera_id)
            dets = [Detection(Box3D(r["center"], r["dims"], r["yaw"]), r["score"], r["class"])
                    for r in rows if r["frame_index"] == f]
            ms = ms.merge(match_frame(dets, [track.boxes[f]], cfg, cam))
        sets[track.object_id] = ms
    try:
        report = compute_metrics(sets) if sets else compute_metrics(MatchSet())
    except NoGroundTruth as e:
        _fail(EXIT_EVAL, str(e))
    doc = {"config": {"lon_tolerance_frac": tol, "iou_threshold": iou,
                      "restrict_to_edited": cfg.restrict_to_edited,
                      "edit_index": edit_index,
                      "edit": describe_edit(cmd), "camera_id": camera_id}}
    doc.update(report.to_dict())
    atomic_write_bytes(out_path, (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode())
    click.echo(f"wrote {out_path} (mAP={report.let_map:.3f} mAPH={report.let_maph:.3f} "
               f"mAPL={report.let_mapl:.3f})")


# --- demo ---------------------------------------------------------------------

DEMO_EDITS = {
    "edits": [
        {"type": "reposition", "object_id": "car", "delta_yaw_deg": 0.0,
         "delta_t_local": [0.0, 0.0, 0.0]},
        {"type": "reposition", "object_id": "car", "delta_yaw_deg": -5.0,
         "delta_t_local": [0.0, 0.0, 0.0]},
        {"type": "reposition", "object_id": "car", "delta_yaw_deg": 0.0,
         "delta_t_local": [0.0, 1.0, 0.0]},
        {"type": "insert", "asset_ref": "car", "object_id": "car2", "class": "Vehicle",
         "boxes": [{"frame": f, "center": [24.0, 0.5, 0.75], "dims": [4.2, 1.9, 1.5],
                    "yaw": 0.1} for f in range(10)]},
        {"type": "delete", "object_id": "parked1"},
    ]
}


@main.command("demo")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--gaussians", type=int, default=2000, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
def cmd_demo(out_dir, gaussians, seed):
    """Materialize the bundled synthetic scene, asset, edits, and scripted
    detections used by the end-to-end walkthrough."""
    out = Path(out_dir)
    (out / "assets").mkdir(parents=True, exist_ok=True)
    (out / "detections").mkdir(parents=True, exist_ok=True)
    layout = synthetic.demo_scene()
    scene_io.save_scene(out / "scene.json", layout)
    car = synthetic.procedural_car(gaussians, seed)
    atomic_write_bytes(out / "assets" / "car.ply", save_asset(car))
    atomic_write_bytes(out / "edits.json",
                       (json.dumps(DEMO_EDITS, sort_keys=True, indent=2) + "\n").encode())
    cmds = parse_edits(json.dumps(DEMO_EDITS))
    for i, cmd in enumerate(cmds):
        if isinstance(cmd, Delete):
            continue
        rows = synthetic.scripted_detections(layout, cmd, "front", range(layout.num_frames))
        text = "\n".join(json.dumps(r, sort_keys=True) for r in rows) + "\n"
        atomic_write_bytes(out / "detections" / f"det-{i:02d}.jsonl", text.encode())
    click.echo(f"wrote demo inputs under {out}")


if __name__ == "__main__":
    main()
