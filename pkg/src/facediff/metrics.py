"""Vertex-space evaluation metrics.

LVE / MVE: per-frame max / mean L2 error over the lip vertex set, then
averaged over frames. DTW: minimal accumulated frame distance under a
monotone warping with steps (1,1), (1,0), (0,1), normalized by the
warping-path length (ties broken toward shorter paths). MOD: mean
absolute difference of the mouth-opening distance. Length-valued metrics
are reported in millimeters when the model's units are meters.
"""

from dataclasses import dataclass, field

import numpy as np

from .morphable import expressions_to_meshes, mouth_opening

MM_PER_METER = 1000.0


def _length_scale(units):
    return MM_PER_METER if units == "meters" else 1.0


def _lip_frames(meshes, lip_ids):
    if len(lip_ids) == 0:
        raise ValueError("empty lip vertex set")
    return meshes.frames[:, list(lip_ids), :]


def _check_same_shape(pred, gt):
    if pred.frames.shape != gt.frames.shape:
        raise ValueError(f"shape mismatch {pred.frames.shape} vs {gt.frames.shape}")


def lve(pred, gt, lip_ids, units="meters"):
    """Mean over frames of the max lip-vertex L2 error."""
    _check_same_shape(pred, gt)
    err = np.linalg.norm(_lip_frames(pred, lip_ids) - _lip_frames(gt, lip_ids), axis=2)
    return float(err.max(axis=1).mean()) * _length_scale(units)


def mve(pred, gt, lip_ids, units="meters"):
    """Mean over frames and lip vertices of the L2 error."""
    _check_same_shape(pred, gt)
    err = np.linalg.norm(_lip_frames(pred, lip_ids) - _lip_frames(gt, lip_ids), axis=2)
    return float(err.mean()) * _length_scale(units)


def frame_distance_matrix(pred, gt, lip_ids):
    """(T_pred, T_gt) matrix of mean lip-vertex distances between frames."""
    a = _lip_frames(pred, lip_ids)[:, None, :, :]
    b = _lip_frames(gt, lip_ids)[None, :, :, :]
    return np.linalg.norm(a - b, axis=3).mean(axis=2)


def dtw_lip(pred, gt, lip_ids):
    """Path-length-normalized dynamic-time-warping lip distance.

    Symmetric in its arguments and exactly zero for identical sequences.
    Among minimal-cost warping paths the shortest is used for
    normalization, which keeps the value well defined under ties.
    """
    d = frame_distance_matrix(pred, gt, lip_ids).astype(np.float64)
    t1, t2 = d.shape
    cost = np.full((t1, t2), np.inf)
    length = np.zeros((t1, t2), dtype=np.int64)
    cost[0, 0] = d[0, 0]
    length[0, 0] = 1
    for i in range(t1):
        for j in range(t2):
            if i == 0 and j == 0:
                continue
            best = (np.inf, 0)
            for pi, pj in ((i - 1, j - 1), (i - 1, j), (i, j - 1)):
                if pi >= 0 and pj >= 0 and (cost[pi, pj], length[pi, pj]) < best:
                    best = (cost[pi, pj], length[pi, pj])
            cost[i, j] = best[0] + d[i, j]
            length[i, j] = best[1] + 1
    return float(cost[-1, -1] / length[-1, -1])


def mod(pred, gt, model, units="meters"):
    """Mean absolute mouth-opening discrepancy."""
    _check_same_shape(pred, gt)
    diff = mouth_opening(pred, model) - mouth_opening(gt, model)
    return float(np.abs(diff).mean()) * _length_scale(units)


@dataclass
class MetricReport:
    lve: float
    mve: float
    dtw: float
    mod: float
    units: str = "mm"
    per_language: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("lve", "mve", "dtw", "mod"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def as_dict(self):
        out = {
            "lve": self.lve,
            "mve": self.mve,
            "dtw": self.dtw,
            "mod": self.mod,
            "units": self.units,
        }
        if self.per_language:
            out["per_language"] = self.per_language
        return out


def evaluate_sequences(model, beta, pred_seq, gt_seq):
    """All four metrics for one predicted/ground-truth sequence pair."""
    pred = expressions_to_meshes(model, beta, pred_seq)
    gt = expressions_to_meshes(model, beta, gt_seq)
    lip = model.lip_vertex_ids
    return {
        "lve": lve(pred, gt, lip, units=model.units),
        "mve": mve(pred, gt, lip, units=model.units),
        "dtw": dtw_lip(pred, gt, lip),
        "mod": mod(pred, gt, model, units=model.units),
    }


def aggregate_report(per_sample, languages=None):
    """Mean metrics over samples, plus per-language means when tags given."""
    keys = ("lve", "mve", "dtw", "mod")
    overall = {k: float(np.mean([s[k] for s in per_sample])) for k in keys}
    per_language = {}
    if languages is not None:
        for lang in sorted(set(languages)):
            rows = [s for s, l in zip(per_sample, languages) if l == lang]
            per_language[lang] = {k: float(np.mean([s[k] for s in rows])) for k in keys}
    return MetricReport(
        lve=overall["lve"],
        mve=overall["mve"],
        dtw=overall["dtw"],
        mod=overall["mod"],
        per_language=per_language,
    )
