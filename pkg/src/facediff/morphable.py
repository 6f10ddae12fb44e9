"""Linear 3D morphable model: coefficients -> vertex positions.

Vertices are synthesized as V = F + C_shape @ beta + C_expr @ m, with F
the template face (N x 3, meters), C_shape a (3N x p) identity basis and
C_expr a (3N x k) expression basis. The model also names the lip vertex
set, the mouth parameter subset and the two vertices whose distance
defines "mouth opening"; those selections are data, not code.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import paf
from .numerics import make_rng

FPS = 25


@dataclass
class IdentityShape:
    """Shape coefficients beta, length p (80 at full scale)."""

    beta: np.ndarray

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float32).reshape(-1)
        if not np.all(np.isfinite(self.beta)):
            raise ValueError("non-finite shape coefficients")


@dataclass
class ExpressionSeq:
    """T x k matrix of per-frame expression coefficients at ``fps``."""

    frames: np.ndarray
    fps: int = FPS

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ValueError(f"expected T x k frames, got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("non-finite expression coefficients")

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def n_params(self):
        return self.frames.shape[1]


@dataclass
class MeshSeq:
    """T x N x 3 vertex positions (meters) at ``fps``."""

    frames: np.ndarray
    fps: int = FPS

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 3 or self.frames.shape[2] != 3:
            raise ValueError(f"expected T x N x 3 frames, got {self.frames.shape}")

    @property
    def n_frames(self):
        return self.frames.shape[0]


@dataclass
class MorphableModel:
    template: np.ndarray          # N x 3
    shape_basis: np.ndarray       # 3N x p
    expr_basis: np.ndarray        # 3N x k
    lip_vertex_ids: list          # indices into [0, N)
    mouth_param_ids: list         # indices into [0, k), size b
    upper_lip_id: int
    lower_lip_id: int
    units: str = "meters"
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.template = np.asarray(self.template, dtype=np.float32)
        self.shape_basis = np.asarray(self.shape_basis, dtype=np.float32)
        self.expr_basis = np.asarray(self.expr_basis, dtype=np.float32)
        n = self.n_vertices
        if self.template.shape != (n, 3):
            raise ValueError("template must be N x 3")
        if self.shape_basis.shape[0] != 3 * n or self.expr_basis.shape[0] != 3 * n:
            raise ValueError("basis row count must be 3N")
        for name, ids, limit in (
            ("lip_vertex_ids", self.lip_vertex_ids, n),
            ("mouth_param_ids", self.mouth_param_ids, self.n_expr),
        ):
            if len(set(ids)) != len(ids):
                raise ValueError(f"{name} has duplicates")
            if any(i < 0 or i >= limit for i in ids):
                raise ValueError(f"{name} out of range")
        for vid in (self.upper_lip_id, self.lower_lip_id):
            if vid < 0 or vid >= n:
                raise ValueError("lip anchor vertex out of range")

    @property
    def n_vertices(self):
        return self.template.shape[0]

    @property
    def n_shape(self):
        return self.shape_basis.shape[1]

    @property
    def n_expr(self):
        return self.expr_basis.shape[1]

    @property
    def n_mouth(self):
        return len(self.mouth_param_ids)


def synthesize_frame(model, beta, m):
    """One frame: V = F + C_shape @ beta + C_expr @ m, shape (N, 3)."""
    beta = beta.beta if isinstance(beta, IdentityShape) else np.asarray(beta, np.float32)
    m = np.asarray(m, dtype=np.float32).reshape(-1)
    if beta.shape[0] != model.n_shape:
        raise ValueError(f"beta length {beta.shape[0]} != {model.n_shape}")
    if m.shape[0] != model.n_expr:
        raise ValueError(f"expression length {m.shape[0]} != {model.n_expr}")
    offset = model.shape_basis @ beta + model.expr_basis @ m
    return model.template + offset.reshape(model.n_vertices, 3)


def expressions_to_meshes(model, beta, seq):
    """Frame-wise synthesis of a whole sequence; fps is preserved."""
    beta_vec = beta.beta if isinstance(beta, IdentityShape) else np.asarray(beta, np.float32)
    if seq.n_params != model.n_expr:
        raise ValueError(f"sequence k {seq.n_params} != model k {model.n_expr}")
    base = model.template.reshape(-1) + model.shape_basis @ beta_vec
    flat = base[None, :] + seq.frames @ model.expr_basis.T
    return MeshSeq(flat.reshape(seq.n_frames, model.n_vertices, 3), fps=seq.fps)


def mouth_subset(seq, model):
    """Gather the mouth-related coefficient columns, order preserved (T x b)."""
    frames = seq.frames if isinstance(seq, ExpressionSeq) else np.asarray(seq, np.float32)
    return frames[:, model.mouth_param_ids]


def mouth_opening(meshes, model):
    """Per-frame distance between the upper- and lower-lip anchor vertices."""
    up = meshes.frames[:, model.upper_lip_id, :]
    lo = meshes.frames[:, model.lower_lip_id, :]
    return np.linalg.norm(up - lo, axis=1)


def make_synthetic_model(seed=0, n_vertices=200, n_shape=80, n_expr=53, n_mouth=13, n_lip=20):
    """Desk-scale stand-in model with orthonormal random bases.

    The first ``n_lip`` vertices are designated the lip region; the two
    anchor vertices are placed there. Mouth parameters default to the
    first ``n_mouth`` expression columns. Bases are orthogonalized so
    coefficient perturbations move vertices at a predictable scale.
    """
    rng = make_rng(seed, "morphable")
    template = rng.normal(scale=0.05, size=(n_vertices, 3)).astype(np.float32)
    template[:, 2] += 0.1  # push the "face" off the origin

    def ortho_basis(cols, scale):
        m = rng.normal(size=(3 * n_vertices, cols))
        q, _ = np.linalg.qr(m)
        return (q * scale).astype(np.float32)

    shape_basis = ortho_basis(n_shape, 0.01)
    expr_basis = ortho_basis(n_expr, 0.01)
    lip_ids = list(range(n_lip))
    return MorphableModel(
        template=template,
        shape_basis=shape_basis,
        expr_basis=expr_basis,
        lip_vertex_ids=lip_ids,
        mouth_param_ids=list(range(n_mouth)),
        upper_lip_id=0,
        lower_lip_id=1,
    )


def save_model(model, path):
    """PAF arrays + JSON sidecar (index lists and declared dimensions)."""
    paf.write_paf(
        path,
        {
            "template": model.template,
            "shape_basis": model.shape_basis,
            "expr_basis": model.expr_basis,
        },
    )
    sidecar = {
        "lip_vertex_ids": list(map(int, model.lip_vertex_ids)),
        "mouth_param_ids": list(map(int, model.mouth_param_ids)),
        "upper_lip_id": int(model.upper_lip_id),
        "lower_lip_id": int(model.lower_lip_id),
        "n_vertices": int(model.n_vertices),
        "n_shape": int(model.n_shape),
        "n_expr": int(model.n_expr),
        "units": model.units,
    }
    with open(_sidecar_path(path), "w") as fh:
        json.dump(sidecar, fh, indent=2)


def load_model(path):
    arrays = paf.read_paf(path)
    with open(_sidecar_path(path)) as fh:
        meta = json.load(fh)
    model = MorphableModel(
        template=arrays["template"],
        shape_basis=arrays["shape_basis"],
        expr_basis=arrays["expr_basis"],
        lip_vertex_ids=meta["lip_vertex_ids"],
        mouth_param_ids=meta["mouth_param_ids"],
        upper_lip_id=meta["upper_lip_id"],
        lower_lip_id=meta["lower_lip_id"],
        units=meta.get("units", "meters"),
    )
    declared = (meta["n_vertices"], meta["n_shape"], meta["n_expr"])
    actual = (model.n_vertices, model.n_shape, model.n_expr)
    if declared != actual:
        raise ValueError(f"sidecar dims {declared} != arrays {actual}")
    return model


def _sidecar_path(path):
    root, _ = os.path.splitext(str(path))
    return root + ".json"
