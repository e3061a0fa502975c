"""Turning a trained map into a real-bogus classifier, and measuring it.

A classifier here is just a set of map cells labeled real: a stamp is
called real when its winner cell is in the set. Evaluation provides the
missed-detection/false-positive rates for a selection, an ROC traced by
switching cells off in a score-derived order, the miss rate at 1% false
positives as the headline figure, and a per-cell real/bogus occupancy
ratio map. The reference scorer that orders cells is a pluggable small
model (by default logistic regression on the frozen encoder latents).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .model import DesomModel, assign_cells
from .stamps import Stamp, as_pixel_array


def _pixels(stamps) -> np.ndarray:
    if isinstance(stamps, np.ndarray):
        return stamps
    return as_pixel_array(list(stamps))


@dataclass(frozen=True)
class PvSelection:
    """The set of map cells labeled real."""

    m: int
    selected: frozenset

    def __post_init__(self):
        cells = frozenset((int(i), int(j)) for i, j in self.selected)
        for i, j in cells:
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise ValueError(f"cell ({i}, {j}) outside {self.m}x{self.m} map")
        object.__setattr__(self, "selected", cells)

    @classmethod
    def all_cells(cls, m: int) -> "PvSelection":
        return cls(m, frozenset((i, j) for i in range(m) for j in range(m)))

    @classmethod
    def none(cls, m: int) -> "PvSelection":
        return cls(m, frozenset())

    def toggled(self, i: int, j: int) -> "PvSelection":
        cell = (int(i), int(j))
        new = self.selected ^ {cell}
        return PvSelection(self.m, new)

    def mask(self) -> np.ndarray:
        out = np.zeros(self.m * self.m, dtype=bool)
        for i, j in self.selected:
            out[i * self.m + j] = True
        return out

    def to_json(self) -> dict:
        return {"m": self.m, "selected": sorted([i, j] for i, j in self.selected)}

    @classmethod
    def from_json(cls, obj: dict) -> "PvSelection":
        return cls(int(obj["m"]), frozenset((int(i), int(j)) for i, j in obj["selected"]))

    def canonical_bytes(self) -> bytes:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode()

    def etag(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()


def classify_stamps(model: DesomModel, sel: PvSelection, stamps) -> np.ndarray:
    """Boolean array: True where a stamp's winner cell is labeled real."""
    if sel.m != model.m:
        raise ValueError(f"selection is for an {sel.m}x{sel.m} map, model has {model.m}x{model.m}")
    idx = assign_cells(model, _pixels(stamps))
    return sel.mask()[idx]


def classify_stamp(model: DesomModel, sel: PvSelection, stamp) -> str:
    pix = stamp.pixels if isinstance(stamp, Stamp) else np.asarray(stamp)
    return "real" if classify_stamps(model, sel, pix[None])[0] else "bogus"


def confusion_rates(model: DesomModel, sel: PvSelection, real_set, bogus_set) -> tuple[float, float]:
    """(missed detection rate, false positive rate) against labeled sets."""
    real = _pixels(real_set)
    bogus = _pixels(bogus_set)
    if real.shape[0] == 0 or bogus.shape[0] == 0:
        raise ValueError("confusion rates need non-empty real and bogus sets")
    mdr = 1.0 - classify_stamps(model, sel, real).mean()
    fpr = classify_stamps(model, sel, bogus).mean()
    return float(mdr), float(fpr)


@dataclass
class ReferenceScorer:
    """Stamp -> score in [0, 1]; stands in for an external CNN's output."""

    weights: np.ndarray
    bias: float
    feat_mean: np.ndarray
    feat_std: np.ndarray
    model: DesomModel
    provenance: str = "logistic-latent"
    holdout_accuracy: float = float("nan")

    def scores(self, stamps) -> np.ndarray:
        z = self.model.encode(_pixels(stamps)).astype(np.float64)
        t = (z - self.feat_mean) / self.feat_std @ self.weights + self.bias
        return 1.0 / (1.0 + np.exp(-t))


def train_reference_scorer(
    model: DesomModel,
    stamps,
    labels=None,
    seed: int = 0,
    holdout: float = 0.25,
    epochs: int = 300,
    lr: float = 0.5,
    l2: float = 1e-4,
) -> ReferenceScorer:
    """Fit logistic regression on encoder latents; deterministic given seed.

    Labels default to the stamps' own labels. Reports held-out accuracy on
    a seeded split.
    """
    pixels = _pixels(stamps)
    if labels is None:
        labels = np.array([s.label for s in stamps])
    y = np.asarray([1.0 if l in (1, "real", True) else 0.0 for l in labels])
    if y.min() == y.max():
        raise ValueError("scorer training needs both real and bogus examples")

    z = model.encode(pixels).astype(np.float64)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(y))
    n_hold = max(1, int(holdout * len(y)))
    hold, train = perm[:n_hold], perm[n_hold:]

    mean = z[train].mean(axis=0)
    std = z[train].std(axis=0)
    std[std == 0] = 1.0
    x = (z[train] - mean) / std
    yt = y[train]
    w = np.zeros(x.shape[1])
    b = 0.0
    for _ in range(epochs):
        p = 1.0 / (1.0 + np.exp(-(x @ w + b)))
        err = p - yt
        w -= lr * (x.T @ err / len(yt) + l2 * w)
        b -= lr * float(err.mean())

    xh = (z[hold] - mean) / std
    ph = 1.0 / (1.0 + np.exp(-(xh @ w + b)))
    acc = float(((ph >= 0.5) == (y[hold] == 1.0)).mean())
    return ReferenceScorer(w, b, mean, std, model, holdout_accuracy=acc)


def order_cells_by_percentile(
    model: DesomModel, scorer: ReferenceScorer, stamps, q: float
) -> list[tuple[int, int]]:
    """Cells sorted ascending by the q-th percentile of their members' scores.

    Cells with no members sort first; ties resolve in row-major order.
    """
    if not (0.0 <= q <= 100.0):
        raise ValueError("percentile q must be in [0, 100]")
    pixels = _pixels(stamps)
    if pixels.shape[0] == 0:
        raise ValueError("ordering needs a non-empty dataset")
    cells = assign_cells(model, pixels)
    scores = scorer.scores(pixels)
    M = model.m * model.m
    keys = []
    for flat in range(M):
        member_scores = scores[cells == flat]
        if member_scores.size == 0:
            keys.append((0, 0.0, flat))
        else:
            keys.append((1, float(np.percentile(member_scores, q)), flat))
    keys.sort()
    return [divmod(flat, model.m) for _, _, flat in keys]


@dataclass(frozen=True)
class RocCurve:
    """Switch-off curve: (fpr, mdr, n_cells_on) per point, all-on first."""

    points: tuple
    q: float | None = None

    def fprs(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    def mdrs(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])


def roc_switch_off(model: DesomModel, ordering, real_set, bogus_set, q=None) -> RocCurve:
    """Start from all cells real and switch them off one by one in `ordering`,
    recording (FPR, MDR) after each removal: m*m + 1 points in total."""
    M = model.m * model.m
    flat_order = [i * model.m + j for i, j in ordering]
    if sorted(flat_order) != list(range(M)):
        raise ValueError("ordering must cover every map cell exactly once")
    real = _pixels(real_set)
    bogus = _pixels(bogus_set)
    if real.shape[0] == 0 or bogus.shape[0] == 0:
        raise ValueError("ROC needs non-empty real and bogus sets")
    real_counts = np.bincount(assign_cells(model, real), minlength=M)
    bogus_counts = np.bincount(assign_cells(model, bogus), minlength=M)
    n_real, n_bogus = real.shape[0], bogus.shape[0]

    missed, false_pos = 0, n_bogus
    points = [(1.0, 0.0, M)]
    for k, flat in enumerate(flat_order):
        missed += int(real_counts[flat])
        false_pos -= int(bogus_counts[flat])
        points.append((false_pos / n_bogus, missed / n_real, M - k - 1))
    return RocCurve(tuple(points), q=q)


def mdr_at_fpr(roc: RocCurve, fpr_limit: float) -> float:
    """MDR of the point with the largest FPR not exceeding the limit
    (step convention, no interpolation); ties take the smallest MDR."""
    candidates = [(p[0], p[1]) for p in roc.points if p[0] <= fpr_limit]
    if not candidates:
        return 1.0
    best_fpr = max(f for f, _ in candidates)
    return min(m for f, m in candidates if f == best_fpr)


def figure_of_merit(roc: RocCurve) -> float:
    """Missed-detection rate at 1% false-positive rate."""
    if not roc.points:
        raise ValueError("empty ROC curve")
    return mdr_at_fpr(roc, 0.01)


def roc_to_csv(roc: RocCurve) -> str:
    lines = ["n_off,fpr,mdr"]
    M = roc.points[0][2]
    for fpr, mdr, n_on in roc.points:
        lines.append(f"{M - n_on},{fpr:.6f},{mdr:.6f}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class RatioMap:
    """Per-cell P(real lands here) / P(bogus lands here).

    values holds NaN where the cell has no bogus members; real_only marks
    the subset of those that do have real members (an "infinite" ratio).
    """

    values: np.ndarray
    real_counts: np.ndarray
    bogus_counts: np.ndarray

    @property
    def real_only(self) -> np.ndarray:
        return (self.bogus_counts == 0) & (self.real_counts > 0)

    def to_json_grid(self) -> list:
        out = []
        for i in range(self.values.shape[0]):
            row = []
            for j in range(self.values.shape[1]):
                v = self.values[i, j]
                row.append(None if np.isnan(v) else float(v))
            out.append(row)
        return out


def ratio_map(model: DesomModel, real_set, bogus_set) -> RatioMap:
    real = _pixels(real_set)
    bogus = _pixels(bogus_set)
    if real.shape[0] == 0 or bogus.shape[0] == 0:
        raise ValueError("ratio map needs non-empty real and bogus sets")
    M = model.m * model.m
    rc = np.bincount(assign_cells(model, real), minlength=M).reshape(model.m, model.m)
    bc = np.bincount(assign_cells(model, bogus), minlength=M).reshape(model.m, model.m)
    p_real = rc / real.shape[0]
    p_bogus = bc / bogus.shape[0]
    values = np.full((model.m, model.m), np.nan)
    ok = p_bogus > 0
    values[ok] = p_real[ok] / p_bogus[ok]
    return RatioMap(values, rc, bc)
