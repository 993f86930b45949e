"""3D gaussian clouds: loading, rigid transforms, projection, and rendering.

A cloud is stored struct-of-arrays for speed; Gaussian3D is the scalar view
used at API boundaries and in tests. Rendering composites splats front to
back and keeps premultiplied color plus coverage; background compositing
(e.g. over white) is the editing module's job.
"""

from __future__ import annotations

import enum
import io
import math
import re
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateGaussian, MalformedPly, NonFiniteValue, WrongFrame
from .geometry import NEAR_PLANE, CameraFrame, Pose, matrix_to_quat, quat_multiply

# DC coefficient of the real spherical harmonic basis.
SH_C0 = 0.28209479177387814


class Frame(enum.Enum):
    LOCAL = "local"
    WORLD = "world"


@dataclass(frozen=True)
class Gaussian3D:
    """One gaussian: mean (m), unit quaternion (w,x,y,z), per-axis stddev (m),
    opacity in [0, 1], RGB color in [0, 1]."""

    mean: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray
    opacity: float
    color: np.ndarray


@dataclass(frozen=True)
class GaussianCloud:
    """Struct-of-arrays gaussian cloud tagged with its coordinate frame."""

    means: np.ndarray      # (N, 3)
    rotations: np.ndarray  # (N, 4) unit quaternions (w, x, y, z)
    scales: np.ndarray     # (N, 3) stddevs, > 0
    opacities: np.ndarray  # (N,) in [0, 1]
    colors: np.ndarray     # (N, 3) in [0, 1]
    frame: Frame = Frame.LOCAL

    def __post_init__(self):
        n = len(self.means)
        for name, arr, shape in (
            ("means", self.means, (n, 3)),
            ("rotations", self.rotations, (n, 4)),
            ("scales", self.scales, (n, 3)),
            ("opacities", self.opacities, (n,)),
            ("colors", self.colors, (n, 3)),
        ):
            a = np.asarray(arr, dtype=np.float64).reshape(shape)
            object.__setattr__(self, name, a)

    def __len__(self) -> int:
        return len(self.means)

    def validate(self) -> None:
        for name, arr in (("means", self.means), ("rotations", self.rotations),
                          ("scales", self.scales), ("opacities", self.opacities),
                          ("colors", self.colors)):
            if not np.isfinite(arr).all():
                raise NonFiniteValue(f"non-finite value in {name}")
        norms = np.linalg.norm(self.rotations, axis=1)
        if len(self) and np.abs(norms - 1.0).max() > 1e-6:
            raise DegenerateGaussian("quaternions are not unit norm")
        if len(self) and self.scales.min() <= 0:
            raise DegenerateGaussian("scales must be positive")
        if len(self) and (self.opacities.min() < 0 or self.opacities.max() > 1):
            raise DegenerateGaussian("opacities must lie in [0, 1]")
        if len(self) and (self.colors.min() < 0 or self.colors.max() > 1):
            raise DegenerateGaussian("colors must lie in [0, 1]")

    def gaussian(self, i: int) -> Gaussian3D:
        return Gaussian3D(self.means[i], self.rotations[i], self.scales[i],
                          float(self.opacities[i]), self.colors[i])

    @staticmethod
    def from_gaussians(gaussians, frame: Frame = Frame.LOCAL) -> "GaussianCloud":
        gs = list(gaussians)
        if not gs:
            return GaussianCloud.empty(frame)
        return GaussianCloud(
            means=np.stack([np.asarray(g.mean, dtype=np.float64) for g in gs]),
            rotations=np.stack([np.asarray(g.rotation, dtype=np.float64) for g in gs]),
            scales=np.stack([np.asarray(g.scale, dtype=np.float64) for g in gs]),
            opacities=np.array([g.opacity for g in gs], dtype=np.float64),
            colors=np.stack([np.asarray(g.color, dtype=np.float64) for g in gs]),
            frame=frame,
        )

    @staticmethod
    def empty(frame: Frame = Frame.WORLD) -> "GaussianCloud":
        z = np.zeros((0, 3))
        return GaussianCloud(z, np.zeros((0, 4)), z.copy(), np.zeros(0), z.copy(), frame)


def rotation_matrices(cloud: GaussianCloud) -> np.ndarray:
    """(N, 3, 3) rotation matrices from the cloud's quaternions."""
    q = cloud.rotations
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    return np.stack([
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ], axis=-1).reshape(-1, 3, 3)


def covariances_world(cloud: GaussianCloud) -> np.ndarray:
    """(N, 3, 3) covariances R diag(s^2) R^T in the cloud's frame."""
    R = rotation_matrices(cloud)
    M = R * cloud.scales[:, None, :]
    return M @ M.transpose(0, 2, 1)


def transform_cloud(cloud: GaussianCloud, pose: Pose) -> GaussianCloud:
    """Rigidly move a local-frame cloud into the world frame.

    Means map to R mu + t; per-gaussian rotations are composed so the world
    covariance of every gaussian equals R Sigma R^T. Scales, opacities and
    colors are unchanged.
    """
    if cloud.frame is not Frame.LOCAL:
        raise WrongFrame("transform_cloud expects a local-frame cloud")
    means = cloud.means @ pose.rotation.T + pose.translation
    q_pose = matrix_to_quat(pose.rotation)
    rots = quat_multiply(q_pose[None, :], cloud.rotations) if len(cloud) else cloud.rotations
    if len(cloud):
        rots = rots / np.linalg.norm(rots, axis=1, keepdims=True)
    return replace(cloud, means=means, rotations=rots, frame=Frame.WORLD)


# --- projection ----------------------------------------------------------------

@dataclass(frozen=True)
class Splat2D:
    """A projected gaussian: pixel center, 2x2 covariance (px^2), camera depth."""

    center: np.ndarray
    cov2d: np.ndarray
    depth: float
    opacity: float
    color: np.ndarray


@dataclass(frozen=True)
class RenderConfig:
    """Projection and compositing constants.

    dilation is added to both cov2d diagonal entries (low-pass filter);
    cull_sigma is the splat extent used for off-image culling; alpha values
    are clamped at alpha_clamp and skipped below alpha_floor; a pixel stops
    accumulating once its transmittance falls below transmittance_floor.
    tile_size only affects the tiled renderer's internal scheduling.
    """

    dilation: float = 0.3
    cull_sigma: float = 3.0
    alpha_clamp: float = 0.99
    alpha_floor: float = 1.0 / 255.0
    transmittance_floor: float = 1e-4
    tile_size: int = 16
    near: float = NEAR_PLANE

    @property
    def footprint_sigma(self) -> float:
        # Smallest radius guaranteed to contain every alpha >= alpha_floor
        # (opacity <= 1), padded so tiled and naive traversals agree exactly.
        return math.sqrt(-2.0 * math.log(self.alpha_floor)) + 1e-3


@dataclass(frozen=True)
class RenderedFrame:
    """Premultiplied RGB in [0, 1] plus coverage; alpha is exactly 0 where
    no splat touched the pixel."""

    rgb: np.ndarray    # (H, W, 3)
    alpha: np.ndarray  # (H, W)


def _project_arrays(cloud: GaussianCloud, cam: CameraFrame, cfg: RenderConfig):
    """Project every gaussian; returns (centers, cov2d, depth, keep)."""
    n = len(cloud)
    if n == 0:
        return (np.zeros((0, 2)), np.zeros((0, 2, 2)), np.zeros(0), np.zeros(0, dtype=bool))
    R_cw = cam.cam_to_world.rotation
    pc = (cloud.means - cam.cam_to_world.translation) @ R_cw
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    k = cam.intrinsics

    cov_w = covariances_world(cloud)
    # Sigma_cam = R_cw^T Sigma_world R_cw
    cov_c = np.einsum("ji,njk,kl->nil", R_cw, cov_w, R_cw)

    with np.errstate(divide="ignore", invalid="ignore"):
        inv_z = np.where(z != 0, 1.0 / z, 0.0)
    inv_z2 = inv_z * inv_z
    zeros = np.zeros(n)
    J = np.stack([
        k.fx * inv_z, zeros, -k.fx * x * inv_z2,
        zeros, k.fy * inv_z, -k.fy * y * inv_z2,
    ], axis=-1).reshape(n, 2, 3)
    cov2d = J @ cov_c @ J.transpose(0, 2, 1)
    cov2d[:, 0, 0] += cfg.dilation
    cov2d[:, 1, 1] += cfg.dilation

    centers = np.stack([k.fx * x * inv_z + k.cx, k.fy * y * inv_z + k.cy], axis=1)

    rx = cfg.cull_sigma * np.sqrt(np.maximum(cov2d[:, 0, 0], 0.0))
    ry = cfg.cull_sigma * np.sqrt(np.maximum(cov2d[:, 1, 1], 0.0))
    keep = (z > cfg.near)
    keep &= centers[:, 0] + rx >= 0.0
    keep &= centers[:, 0] - rx <= k.width - 1.0
    keep &= centers[:, 1] + ry >= 0.0
    keep &= centers[:, 1] - ry <= k.height - 1.0
    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] ** 2
    keep &= det > 1e-12
    return centers, cov2d, z, keep


def project_gaussian(g: Gaussian3D, cam: CameraFrame, dilation: float = 0.3,
                     config: RenderConfig | None = None) -> Splat2D | None:
    """Project one world-frame gaussian to a 2D splat.

    Returns None when the gaussian is culled (behind the near plane, or its
    cull_sigma extent misses the image).
    """
    cfg = replace(config or RenderConfig(), dilation=dilation)
    cloud = GaussianCloud(
        means=g.mean[None, :], rotations=np.asarray(g.rotation, dtype=np.float64)[None, :],
        scales=np.asarray(g.scale, dtype=np.float64)[None, :],
        opacities=np.array([g.opacity]), colors=np.asarray(g.color, dtype=np.float64)[None, :],
        frame=Frame.WORLD,
    )
    centers, cov2d, z, keep = _project_arrays(cloud, cam, cfg)
    if not keep[0]:
        return None
    return Splat2D(centers[0], cov2d[0], float(z[0]), float(g.opacity),
                   np.asarray(g.color, dtype=np.float64))


def _sorted_splats(cloud: GaussianCloud, cam: CameraFrame, cfg: RenderConfig):
    """Project, cull, depth-sort (stable; ties keep input order), and return
    per-splat conic coefficients (a, b, c) of the inverse 2D covariance."""
    centers, cov2d, z, keep = _project_arrays(cloud, cam, cfg)
    idx = np.nonzero(keep)[0]
    order = idx[np.argsort(z[idx], kind="stable")]
    centers, cov2d, z = centers[order], cov2d[order], z[order]
    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] ** 2
    conic = np.stack([cov2d[:, 1, 1] / det, -cov2d[:, 0, 1] / det, cov2d[:, 0, 0] / det], axis=1)
    return centers, conic, cov2d, z, cloud.opacities[order], cloud.colors[order]


def render(cloud: GaussianCloud, cam: CameraFrame, config: RenderConfig | None = None) -> RenderedFrame:
    """Tiled front-to-back alpha compositing of a world-frame cloud.

    Per pixel p and depth-ordered splats: alpha_i = opacity_i *
    exp(-0.5 d^T cov2d^-1 d) clamped at alpha_clamp, skipped below
    alpha_floor; color accumulates sum o_i alpha_i prod_{j<i} (1 - alpha_j)
    and coverage accumulates the same with o_i = 1; a pixel stops once its
    transmittance drops below transmittance_floor. Output is deterministic:
    accumulation order is fixed by the depth sort, not by scheduling.
    """
    cfg = config or RenderConfig()
    if cloud.frame is not Frame.WORLD:
        raise WrongFrame("render expects a world-frame cloud")
    k = cam.intrinsics
    H, W = k.height, k.width
    rgb = np.zeros((H, W, 3))
    cov = np.zeros((H, W))
    if len(cloud) == 0:
        return RenderedFrame(rgb, cov)
    centers, conic, cov2d, _, opac, colors = _sorted_splats(cloud, cam, cfg)
    if len(centers) == 0:
        return RenderedFrame(rgb, cov)

    ts = cfg.tile_size
    ntx, nty = (W + ts - 1) // ts, (H + ts - 1) // ts
    fs = cfg.footprint_sigma
    rx = fs * np.sqrt(cov2d[:, 0, 0])
    ry = fs * np.sqrt(cov2d[:, 1, 1])
    tx0 = np.clip(np.floor((centers[:, 0] - rx) / ts).astype(int), 0, ntx - 1)
    tx1 = np.clip(np.floor((centers[:, 0] + rx) / ts).astype(int), 0, ntx - 1)
    ty0 = np.clip(np.floor((centers[:, 1] - ry) / ts).astype(int), 0, nty - 1)
    ty1 = np.clip(np.floor((centers[:, 1] + ry) / ts).astype(int), 0, nty - 1)

    tile_lists: list[list[int]] = [[] for _ in range(ntx * nty)]
    for i in range(len(centers)):
        for ty in range(ty0[i], ty1[i] + 1):
            base = ty * ntx
            for tx in range(tx0[i], tx1[i] + 1):
                tile_lists[base + tx].append(i)

    for ty in range(nty):
        ys0, ys1 = ty * ts, min((ty + 1) * ts, H)
        for tx in range(ntx):
            splat_ids = tile_lists[ty * ntx + tx]
            if not splat_ids:
                continue
            xs0, xs1 = tx * ts, min((tx + 1) * ts, W)
            xs = np.arange(xs0, xs1, dtype=np.float64)
            ys = np.arange(ys0, ys1, dtype=np.float64)
            T = np.ones((ys1 - ys0, xs1 - xs0))
            t_rgb = np.zeros((ys1 - ys0, xs1 - xs0, 3))
            t_cov = np.zeros((ys1 - ys0, xs1 - xs0))
            for i in splat_ids:
                if T.max() < cfg.transmittance_floor:
                    break
                dx = xs[None, :] - centers[i, 0]
                dy = ys[:, None] - centers[i, 1]
                power = -0.5 * (conic[i, 0] * dx * dx + conic[i, 2] * dy * dy) - conic[i, 1] * dx * dy
                alpha = np.minimum(opac[i] * np.exp(power), cfg.alpha_clamp)
                active = (T >= cfg.transmittance_floor) & (alpha >= cfg.alpha_floor)
                w = np.where(active, alpha * T, 0.0)
                t_rgb += w[:, :, None] * colors[i]
                t_cov += w
                T = np.where(active, T * (1.0 - alpha), T)
            rgb[ys0:ys1, xs0:xs1] = t_rgb
            cov[ys0:ys1, xs0:xs1] = t_cov
    return RenderedFrame(np.clip(rgb, 0.0, 1.0), np.clip(cov, 0.0, 1.0))


def render_naive(cloud: GaussianCloud, cam: CameraFrame, config: RenderConfig | None = None) -> RenderedFrame:
    """Reference renderer: identical contract to render, evaluated per pixel
    over every surviving splat with no tiling. Exists purely as an oracle."""
    cfg = config or RenderConfig()
    if cloud.frame is not Frame.WORLD:
        raise WrongFrame("render_naive expects a world-frame cloud")
    k = cam.intrinsics
    H, W = k.height, k.width
    rgb = np.zeros((H, W, 3))
    cov = np.zeros((H, W))
    if len(cloud) == 0:
        return RenderedFrame(rgb, cov)
    centers, conic, _, _, opac, colors = _sorted_splats(cloud, cam, cfg)
    xs = np.arange(W, dtype=np.float64)
    ys = np.arange(H, dtype=np.float64)
    T = np.ones((H, W))
    for i in range(len(centers)):
        if T.max() < cfg.transmittance_floor:
            break
        dx = xs[None, :] - centers[i, 0]
        dy = ys[:, None] - centers[i, 1]
        power = -0.5 * (conic[i, 0] * dx * dx + conic[i, 2] * dy * dy) - conic[i, 1] * dx * dy
        alpha = np.minimum(opac[i] * np.exp(power), cfg.alpha_clamp)
        active = (T >= cfg.transmittance_floor) & (alpha >= cfg.alpha_floor)
        w = np.where(active, alpha * T, 0.0)
        rgb += w[:, :, None] * colors[i]
        cov += w
        T = np.where(active, T * (1.0 - alpha), T)
    return RenderedFrame(np.clip(rgb, 0.0, 1.0), np.clip(cov, 0.0, 1.0))


def composite_over_white(frame: RenderedFrame) -> np.ndarray:
    """Resolve premultiplied color over a white background."""
    return np.clip(frame.rgb + (1.0 - frame.alpha)[:, :, None], 0.0, 1.0)


# --- PLY asset I/O --------------------------------------------------------------

_PLY_DTYPES = {
    "float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8",
    "uchar": "u1", "uint8": "u1", "char": "i1", "int8": "i1",
    "short": "<i2", "int16": "<i2", "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4", "uint": "<u4", "uint32": "<u4",
}

_REQUIRED = ("x", "y", "z", "rot_0", "rot_1", "rot_2", "rot_3",
             "scale_0", "scale_1", "scale_2", "opacity")


def _parse_ply_header(data: bytes):
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise MalformedPly("missing ply magic or end_header")
    nl = data.find(b"\n", end)
    if nl < 0:
        raise MalformedPly("truncated header")
    header = data[:nl].decode("ascii", errors="replace")
    body = data[nl + 1:]

    fmt = None
    count = None
    props: list[tuple[str, str]] = []
    comments: list[str] = []
    in_vertex = False
    for line in header.splitlines()[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            if parts[1] not in ("ascii", "binary_little_endian"):
                raise MalformedPly(f"unsupported format {parts[1]!r}")
            fmt = parts[1]
        elif parts[0] == "comment":
            comments.append(" ".join(parts[1:]))
        elif parts[0] == "element":
            if parts[1] == "vertex":
                in_vertex = True
                count = int(parts[2])
            else:
                if int(parts[2]) != 0:
                    raise MalformedPly(f"unsupported element {parts[1]!r}")
                in_vertex = False
        elif parts[0] == "property" and in_vertex:
            if parts[1] == "list":
                raise MalformedPly("list properties are not supported")
            if parts[1] not in _PLY_DTYPES:
                raise MalformedPly(f"unsupported property type {parts[1]!r}")
            props.append((parts[2], _PLY_DTYPES[parts[1]]))
    if fmt is None or count is None or not props:
        raise MalformedPly("header lacks format, vertex element, or properties")
    return fmt, count, props, comments, body


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def load_asset(data: bytes, convention: str = "auto") -> GaussianCloud:
    """Decode a PLY splat export into a local-frame cloud.

    Two field conventions are supported. "splat" (the common 3DGS export:
    f_dc_* color fields) stores log scales and logit opacities, so scales are
    exponentiated and opacity passes through a sigmoid; color comes from the
    spherical-harmonic DC term, clamp(0.5 + SH_C0 * f_dc, 0, 1). "linear"
    (red/green/blue color fields) stores everything raw, with integer color
    divided by 255. "auto" picks by color fields, unless a header comment
    "convention=linear" or "convention=splat" decides it. Quaternions are
    normalized on load.
    """
    fmt, count, props, comments, body = _parse_ply_header(data)
    if fmt == "ascii":
        rows = body.split()
        if len(rows) < count * len(props):
            raise MalformedPly("ascii payload shorter than declared vertex count")
        try:
            table = np.array(rows[: count * len(props)], dtype=np.float64).reshape(count, len(props))
        except ValueError as e:
            raise MalformedPly(f"bad ascii value: {e}") from None
        cols = {n: table[:, i] for i, (n, _) in enumerate(props)}
        col_dtype = {n: np.float64 for n, _ in props}
    else:
        dt = np.dtype([(f"f{i}", d) for i, (_, d) in enumerate(props)])
        need = dt.itemsize * count
        if len(body) < need:
            raise MalformedPly(f"binary payload is {len(body)} bytes, expected {need}")
        rec = np.frombuffer(body[:need], dtype=dt)
        cols = {n: rec[f"f{i}"].astype(np.float64) for i, (n, _) in enumerate(props)}
        col_dtype = {n: np.dtype(d) for n, d in props}

    for f in _REQUIRED:
        if f not in cols:
            raise MalformedPly(f"missing required field {f!r}")
    has_dc = all(f"f_dc_{i}" in cols for i in range(3))
    has_rgb = all(c in cols for c in ("red", "green", "blue"))
    if not has_dc and not has_rgb:
        raise MalformedPly("need either f_dc_0..2 or red/green/blue color fields")

    conv = convention
    if conv == "auto":
        for c in comments:
            m = re.search(r"convention\s*=\s*(linear|splat)", c)
            if m:
                conv = m.group(1)
                break
    if conv == "auto":
        conv = "splat" if has_dc else "linear"
    if conv not in ("linear", "splat"):
        raise ValueError(f"unknown convention {convention!r}")

    raw = np.stack([cols[f] for f in _REQUIRED], axis=1)
    if not np.isfinite(raw).all():
        raise NonFiniteValue("non-finite value in PLY payload")

    means = np.stack([cols["x"], cols["y"], cols["z"]], axis=1)
    quats = np.stack([cols[f"rot_{i}"] for i in range(4)], axis=1)
    scales = np.stack([cols[f"scale_{i}"] for i in range(3)], axis=1)
    opac = cols["opacity"]
    if conv == "splat":
        scales = np.exp(scales)
        opac = _sigmoid(opac)
    if has_dc:
        dc = np.stack([cols[f"f_dc_{i}"] for i in range(3)], axis=1)
        if not np.isfinite(dc).all():
            raise NonFiniteValue("non-finite color value")
        colors = np.clip(0.5 + SH_C0 * dc, 0.0, 1.0)
    else:
        colors = np.stack([cols["red"], cols["green"], cols["blue"]], axis=1)
        if any(np.issubdtype(col_dtype[c], np.integer) for c in ("red", "green", "blue")):
            colors = colors / 255.0
        if not np.isfinite(colors).all():
            raise NonFiniteValue("non-finite color value")

    if count and scales.min() <= 0:
        raise DegenerateGaussian("scale <= 0 after decoding")
    if count and (opac.min() < 0 or opac.max() > 1):
        raise DegenerateGaussian("opacity outside [0, 1] after decoding")
    if count and (colors.min() < 0 or colors.max() > 1):
        raise DegenerateGaussian("color outside [0, 1]")
    norms = np.linalg.norm(quats, axis=1)
    if count and norms.min() < 1e-9:
        raise DegenerateGaussian("zero-norm quaternion")
    if count:
        quats = quats / norms[:, None]
    cloud = GaussianCloud(means, quats, scales, opac, colors, Frame.LOCAL)
    cloud.validate()
    return cloud


def save_asset(cloud: GaussianCloud, binary: bool = True) -> bytes:
    """Serialize a cloud as a linear-convention PLY (float32 fields)."""
    names = ["x", "y", "z", "rot_0", "rot_1", "rot_2", "rot_3",
             "scale_0", "scale_1", "scale_2", "opacity", "red", "green", "blue"]
    table = np.concatenate([
        cloud.means, cloud.rotations, cloud.scales,
        cloud.opacities[:, None], cloud.colors,
    ], axis=1).astype("<f4")
    buf = io.BytesIO()
    fmt = "binary_little_endian" if binary else "ascii"
    lines = ["ply", f"format {fmt} 1.0", "comment convention=linear",
             f"element vertex {len(cloud)}"]
    lines += [f"property float {n}" for n in names]
    lines.append("end_header")
    buf.write(("\n".join(lines) + "\n").encode("ascii"))
    if binary:
        buf.write(table.tobytes())
    else:
        for row in table:
            buf.write((" ".join(repr(float(v)) for v in row) + "\n").encode("ascii"))
    return buf.getvalue()
