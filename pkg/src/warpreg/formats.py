"""Self-describing binary and text formats for every artifact we persist.

Image container (magic ``WRIMG001``, little-endian):
    u64 ndim | u64 dims[ndim] | f64 spacing[ndim] | f64 origin[ndim] |
    f32 intensities in C order (axis 0 slowest, axis k = physical axis k)

Mesh (ASCII, magic line ``WRMESH001``):
    line 2: ``nv nf has_normals``
    nv vertex lines: ``x y z label [nx ny nz]`` (label in 1..17)
    nf face lines: ``i j k`` (0-based vertex indices)

Landmarks: CSV with header ``volunteer,observer,frame,wall,level,x,y,z``,
coordinates written with 9 significant digits.

Checkpoint (magic ``WRCKPT01``): u64 JSON-header length, the JSON header
(config snapshot, layer sizes, embedding spec, domain, optimizer scalars,
generator states, loss-history tail, array manifest), then the arrays as
raw float64. Generator states ride along so a save/load mid-run resumes
bit-exactly.
"""

import dataclasses
import json
import warnings

import numpy as np

from .errors import (BadMagicError, DimensionError, FormatError,
                     MeshTopologyError, TruncatedFileError)
from .field import DeformationField
from .fourier import FourierMap, IdentityMap
from .grids import ImageGrid
from .landmarks import LandmarkSet
from .meshes import LVMesh
from .optim import AdamState
from .training import TrainConfig
from . import autodiff

IMAGE_MAGIC = b"WRIMG001"
MESH_MAGIC = "WRMESH001"
CHECKPOINT_MAGIC = b"WRCKPT01"
CHECKPOINT_VERSION = 1


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedFileError(f"file ends inside {what} "
                                 f"({len(buf)} of {n} bytes)")
    return buf


def save_image(path, img: ImageGrid):
    with open(path, "wb") as fh:
        fh.write(IMAGE_MAGIC)
        fh.write(np.uint64(img.ndim).tobytes())
        fh.write(np.asarray(img.dims, dtype="<u8").tobytes())
        fh.write(img.spacing.astype("<f8").tobytes())
        fh.write(img.origin.astype("<f8").tobytes())
        fh.write(img.intensities.astype("<f4").tobytes())


def load_image(path) -> ImageGrid:
    with open(path, "rb") as fh:
        magic = fh.read(len(IMAGE_MAGIC))
        if magic != IMAGE_MAGIC:
            raise BadMagicError(f"not an image file (magic {magic!r})")
        ndim = int(np.frombuffer(_read_exact(fh, 8, "header"), "<u8")[0])
        if ndim not in (2, 3):
            raise DimensionError(f"dimension overflow: ndim={ndim}")
        dims = np.frombuffer(_read_exact(fh, 8 * ndim, "dims"), "<u8")
        if np.any(dims < 2) or np.any(dims > 2 ** 31) or int(np.prod(dims)) > 2 ** 40:
            raise DimensionError(f"dimension overflow: dims={dims.tolist()}")
        dims = tuple(int(n) for n in dims)
        spacing = np.frombuffer(_read_exact(fh, 8 * ndim, "spacing"), "<f8").copy()
        origin = np.frombuffer(_read_exact(fh, 8 * ndim, "origin"), "<f8").copy()
        count = int(np.prod(dims))
        payload = _read_exact(fh, 4 * count, "intensities")
        intensities = np.frombuffer(payload, "<f4").astype(np.float64).reshape(dims)
    return ImageGrid(dims, spacing, origin, intensities)


def save_mesh(path, mesh: LVMesh):
    has_normals = mesh.normals is not None
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MESH_MAGIC + "\n")
        fh.write(f"{len(mesh.vertices)} {len(mesh.faces)} {int(has_normals)}\n")
        for i, v in enumerate(mesh.vertices):
            line = f"{v[0]!r} {v[1]!r} {v[2]!r} {mesh.aha_labels[i]}"
            if has_normals:
                n = mesh.normals[i]
                line += f" {n[0]!r} {n[1]!r} {n[2]!r}"
            fh.write(line + "\n")
        for tri in mesh.faces:
            fh.write(f"{tri[0]} {tri[1]} {tri[2]}\n")


def load_mesh(path) -> LVMesh:
    """Parse a mesh file; labels and topology are validated here.

    A non-manifold edge (shared by more than two faces) is an error; a
    merely open surface loads with a warning and leaves point-in-mesh
    unavailable.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != MESH_MAGIC:
        raise BadMagicError("not a mesh file")
    if len(lines) < 2:
        raise TruncatedFileError("missing mesh count line")
    try:
        nv, nf, has_normals = (int(p) for p in lines[1].split())
    except ValueError as exc:
        raise FormatError(f"line 2: bad count line {lines[1]!r}") from exc
    if len(lines) < 2 + nv + nf:
        raise TruncatedFileError(f"expected {nv} vertex and {nf} face lines, "
                                 f"file has {len(lines) - 2}")
    verts = np.empty((nv, 3))
    labels = np.empty(nv, dtype=np.int64)
    normals = np.empty((nv, 3)) if has_normals else None
    for i in range(nv):
        lineno = 3 + i
        parts = lines[2 + i].split()
        want = 7 if has_normals else 4
        if len(parts) != want:
            raise FormatError(f"line {lineno}: expected {want} fields, "
                              f"got {len(parts)}")
        try:
            verts[i] = [float(p) for p in parts[:3]]
            labels[i] = int(parts[3])
            if has_normals:
                normals[i] = [float(p) for p in parts[4:7]]
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
        if not 1 <= labels[i] <= 17:
            raise FormatError(f"line {lineno}: label {labels[i]} outside 1..17")
    faces = np.empty((nf, 3), dtype=np.int64)
    for i in range(nf):
        lineno = 3 + nv + i
        parts = lines[2 + nv + i].split()
        if len(parts) != 3:
            raise FormatError(f"line {lineno}: expected 3 vertex indices")
        try:
            faces[i] = [int(p) for p in parts]
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
        if np.any(faces[i] < 0) or np.any(faces[i] >= nv):
            raise FormatError(f"line {lineno}: vertex index out of range")
    edge_count = {}
    for tri in faces:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            edge_count[key] = edge_count.get(key, 0) + 1
    bad = [e for e, c in edge_count.items() if c > 2]
    if bad:
        raise MeshTopologyError(f"non-manifold edges: {bad[:5]}")
    mesh = LVMesh(vertices=verts, faces=faces, aha_labels=labels, normals=normals)
    if not mesh.is_closed:
        warnings.warn(f"{path}: surface is not closed; point-in-mesh disabled")
    return mesh


def save_landmarks(path, sets):
    if isinstance(sets, LandmarkSet):
        sets = [sets]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("volunteer,observer,frame,wall,level,x,y,z\n")
        for lm in sets:
            for k in range(len(lm)):
                p = lm.points[k]
                fh.write(f"{lm.volunteer},{lm.observer},{lm.frame},"
                         f"{lm.walls[k]},{lm.levels[k]},"
                         f"{p[0]:.9g},{p[1]:.9g},{p[2]:.9g}\n")


def load_landmarks(path) -> list:
    """Parse the landmark CSV into LandmarkSets grouped by
    (volunteer, observer, frame)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise TruncatedFileError("empty landmark file")
    header = lines[0].strip()
    if header != "volunteer,observer,frame,wall,level,x,y,z":
        raise FormatError(f"bad landmark header: {header!r}")
    groups = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 8:
            raise FormatError(f"line {lineno}: expected 8 columns, got {len(parts)}")
        vol, obs, frame, wall, level = (p.strip() for p in parts[:5])
        try:
            frame = int(frame)
            xyz = [float(p) for p in parts[5:8]]
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
        groups.setdefault((vol, obs, frame), []).append((wall, level, xyz, lineno))
    out = []
    for (vol, obs, frame), rows in sorted(groups.items()):
        try:
            out.append(LandmarkSet(points=np.array([r[2] for r in rows]),
                                   walls=[r[0] for r in rows],
                                   levels=[r[1] for r in rows],
                                   frame=frame, observer=obs, volunteer=vol))
        except ValueError as exc:
            raise FormatError(f"near line {rows[0][3]}: {exc}") from exc
    return out


def load_raw_volume(raw_path, header_path) -> ImageGrid:
    """Converter stub for volumes exported from other tools: flat float32
    voxels plus a key=value sidecar (dims, spacing, origin)."""
    meta = {}
    with open(header_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                key, _, value = line.partition("=")
                meta[key.strip()] = value.strip()
    try:
        dims = tuple(int(p) for p in meta["dims"].split(","))
        spacing = [float(p) for p in meta["spacing"].split(",")]
        origin = [float(p) for p in meta.get("origin", ",".join("0" * len(dims))).split(",")]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad raw-volume header: {exc}") from exc
    data = np.fromfile(raw_path, dtype="<f4")
    if data.size != int(np.prod(dims)):
        raise TruncatedFileError(f"raw volume has {data.size} voxels, "
                                 f"header says {np.prod(dims)}")
    return ImageGrid(dims, spacing, origin, data.astype(np.float64).reshape(dims))


def _rng_state(gen):
    return None if gen is None else gen.bit_generator.state


def _restore_rng(state):
    if state is None:
        return None
    gen = np.random.default_rng(0)
    gen.bit_generator.state = state
    return gen


class Checkpoint:
    """Loaded checkpoint; duck-types the resume interface of TrainResult."""

    def __init__(self, config, field, iteration, adam, rng_collocation,
                 rng_frame, loss_tail):
        self.config = config
        self.field = field
        self.iteration = iteration
        self.adam = adam
        self.rng_collocation = rng_collocation
        self.rng_frame = rng_frame
        self.loss_tail = loss_tail


def save_checkpoint(path, config: TrainConfig, field: DeformationField,
                    iteration: int = 0, adam: AdamState = None,
                    rng_collocation=None, rng_frame=None, loss_tail=None):
    arrays = []
    for k, (w, b) in enumerate(zip(field.net.weights, field.net.biases)):
        arrays.append((f"weights_{k}", w))
        arrays.append((f"biases_{k}", b))
    emb = field.embedding
    fourier_meta = None
    if isinstance(emb, FourierMap):
        fourier_meta = {"m": emb.m, "sigma": emb.sigma, "seed": emb.rng_seed}
        arrays.append(("fourier_B", emb.B))
    adam_meta = None
    if adam is not None:
        adam_meta = {"step": adam.step, "beta1": adam.beta1,
                     "beta2": adam.beta2, "eps": adam.eps}
        for k, (m, v) in enumerate(zip(adam.m, adam.v)):
            arrays.append((f"adam_m_{k}", m))
            arrays.append((f"adam_v_{k}", v))
    cfg = {f.name: getattr(config, f.name) for f in dataclasses.fields(TrainConfig)}
    cfg["hidden_sizes"] = list(cfg["hidden_sizes"])
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": cfg,
        "layer_sizes": list(field.net.layer_sizes),
        "activation": field.net.hidden_activation,
        "spatial_dim": field.spatial_dim,
        "time_dependent": field.time_dependent,
        "domain_origin": field.domain_origin.tolist(),
        "domain_extent": field.domain_extent.tolist(),
        "fourier": fourier_meta,
        "adam": adam_meta,
        "iteration": iteration,
        "rng_collocation": _rng_state(rng_collocation),
        "rng_frame": _rng_state(rng_frame),
        "loss_tail": loss_tail if loss_tail is not None else [],
        "arrays": [[name, list(arr.shape)] for name, arr in arrays],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(np.uint64(len(blob)).tobytes())
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise BadMagicError(f"not a checkpoint (magic {magic!r})")
        blob_len = int(np.frombuffer(_read_exact(fh, 8, "header length"), "<u8")[0])
        header = json.loads(_read_exact(fh, blob_len, "header").decode("utf-8"))
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise FormatError(f"checkpoint format version "
                              f"{header.get('format_version')} not supported "
                              f"(expected {CHECKPOINT_VERSION})")
        arrays = {}
        for name, shape in header["arrays"]:
            count = int(np.prod(shape)) if shape else 1
            buf = _read_exact(fh, 8 * count, f"array {name}")
            arrays[name] = np.frombuffer(buf, "<f8").reshape(shape).copy()
    cfg_raw = dict(header["config"])
    cfg_raw["hidden_sizes"] = tuple(cfg_raw["hidden_sizes"])
    config = TrainConfig(**cfg_raw)
    layer_sizes = header["layer_sizes"]
    weights = [arrays[f"weights_{k}"] for k in range(len(layer_sizes) - 1)]
    biases = [arrays[f"biases_{k}"] for k in range(len(layer_sizes) - 1)]
    net = autodiff.DenseNetwork(layer_sizes, weights, biases,
                                hidden_activation=header["activation"])
    net.validate()
    if header["fourier"] is not None:
        fm = header["fourier"]
        B = arrays["fourier_B"]
        B.setflags(write=False)
        emb = FourierMap(B=B, m=fm["m"], sigma=fm["sigma"],
                         spatial_dim=header["spatial_dim"], rng_seed=fm["seed"])
    else:
        emb = IdentityMap(header["spatial_dim"])
    field = DeformationField(net=net, embedding=emb,
                             spatial_dim=header["spatial_dim"],
                             time_dependent=header["time_dependent"],
                             domain_origin=np.array(header["domain_origin"]),
                             domain_extent=np.array(header["domain_extent"]))
    adam = None
    if header["adam"] is not None:
        am = header["adam"]
        nparams = 2 * (len(layer_sizes) - 1)
        adam = AdamState(m=[arrays[f"adam_m_{k}"] for k in range(nparams)],
                         v=[arrays[f"adam_v_{k}"] for k in range(nparams)],
                         step=am["step"], beta1=am["beta1"], beta2=am["beta2"],
                         eps=am["eps"])
    return Checkpoint(config=config, field=field, iteration=header["iteration"],
                      adam=adam,
                      rng_collocation=_restore_rng(header["rng_collocation"]),
                      rng_frame=_restore_rng(header["rng_frame"]),
                      loss_tail=header["loss_tail"])
