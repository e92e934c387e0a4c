"""Dataset loading, standardization, and per-trial splits.

Datasets are pairs of feature tables over the same underlying instances:
row i of the source table and row i of the target table describe one
object through two different feature extractors.  Trials restrict to a
binary class pair, carve out unlabeled co-occurrence rows for alignment,
labeled source rows for classifier training, and held-out target rows
for testing.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .exceptions import LoadError


class Domain(enum.Enum):
    SOURCE = "source"
    TARGET = "target"


@dataclass
class DomainDataset:
    """Feature matrix with per-row integer labels (-1 = unlabeled)."""

    features: np.ndarray
    labels: np.ndarray
    domain: Domain

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2:
            raise ValueError("features must be 2-D")
        if len(self.labels) != self.features.shape[0]:
            raise ValueError("labels length must equal feature row count")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]


@dataclass
class Standardization:
    """Per-column centering/scaling fitted on one matrix."""

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # columns with vanishing spread: centered only

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        scale = np.where(self.constant, 1.0, self.std)
        return (x - self.mean) / scale


def standardize(features):
    """Fit and apply per-column z-scoring.

    Returns (transformed, Standardization).  Columns whose std is below
    1e-12 are centered but not scaled, and flagged in the result.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.size == 0:
        raise ValueError("features must be a non-empty 2-D matrix")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    constant = std < 1e-12
    fit = Standardization(mean=mean, std=std, constant=constant)
    return fit.apply(x), fit


@dataclass
class SigmoidRange:
    """Affine map of standardized features into the sigmoid-friendly band.

    Fitted column ranges are mapped onto [0.1, 0.9]; values outside the
    fitted range extend linearly.  Keeps reconstruction targets reachable
    for a sigmoid output layer.
    """

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(lo=x.min(axis=0), hi=x.max(axis=0))

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        span = np.where(self.hi > self.lo, self.hi - self.lo, 1.0)
        return 0.1 + 0.8 * (x - self.lo) / span


@dataclass
class TrialSplit:
    """One trial's data: aligned unlabeled pairs, labeled train, held-out test."""

    co_source: np.ndarray
    co_target: np.ndarray
    train_source: tuple
    test_target: tuple
    seed: int
    co_indices: np.ndarray = None
    train_indices: np.ndarray = None
    test_indices: np.ndarray = None


def _parse_table(path, expected_cols=None):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            try:
                rows.append([float(tok) for tok in tokens])
            except ValueError:
                bad = next(t for t in tokens if not _is_number(t))
                raise LoadError(f"{path}:{lineno}: non-numeric token {bad!r}") from None
            if expected_cols is not None and len(rows[-1]) != expected_cols:
                raise LoadError(
                    f"{path}:{lineno}: expected {expected_cols} columns, "
                    f"got {len(rows[-1])}"
                )
    if not rows:
        raise LoadError(f"{path}: empty table")
    return np.asarray(rows, dtype=float)


def _is_number(tok):
    try:
        float(tok)
        return True
    except ValueError:
        return False


N_MULTIFEATURES_ROWS = 2000
PIXEL_DIM = 240
PROFILE_DIM = 216
ROWS_PER_DIGIT = 200


def load_multifeatures(profile_path, pixel_path):
    """Load the handwritten-numeral two-view tables.

    Plain-text whitespace-separated tables of 2000 rows each (digits 0-9
    in contiguous blocks of 200).  The 240-column pixel-average table
    becomes the source domain, the 216-column profile table the target.
    Returns (source, target) with block-derived labels.
    """
    profile = _parse_table(profile_path, expected_cols=PROFILE_DIM)
    pixel = _parse_table(pixel_path, expected_cols=PIXEL_DIM)
    if profile.shape != (N_MULTIFEATURES_ROWS, PROFILE_DIM):
        raise LoadError(
            f"{profile_path}: expected shape (2000, {PROFILE_DIM}), got {profile.shape}"
        )
    if pixel.shape != (N_MULTIFEATURES_ROWS, PIXEL_DIM):
        raise LoadError(
            f"{pixel_path}: expected shape (2000, {PIXEL_DIM}), got {pixel.shape}"
        )
    labels = np.repeat(np.arange(10), ROWS_PER_DIGIT)
    source = DomainDataset(pixel, labels, Domain.SOURCE)
    target = DomainDataset(profile, labels, Domain.TARGET)
    return source, target


def load_labeled_csv(path, domain):
    """Generic loader: first column integer label (-1 allowed), rest features."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            tokens = line.split(",")
            try:
                rows.append([float(tok) for tok in tokens])
            except ValueError:
                bad = next(t for t in tokens if not _is_number(t))
                raise LoadError(f"{path}:{lineno}: non-numeric token {bad!r}") from None
    if not rows:
        raise LoadError(f"{path}: empty table")
    table = np.asarray(rows, dtype=float)
    if table.shape[1] < 2:
        raise LoadError(f"{path}: need a label column plus at least one feature")
    labels = table[:, 0].astype(int)
    return DomainDataset(table[:, 1:], labels, domain)


def _check_paired(source, target):
    if source.n != target.n:
        raise ValueError(
            f"paired datasets must have equal row counts, got {source.n} and {target.n}"
        )
    if not np.array_equal(source.labels, target.labels):
        raise ValueError("paired datasets must agree on per-row labels")


def split_trial(source, target, binary_pair, ratios=(0.6, 0.2), seed=0, co_scope="task"):
    """Carve one trial's splits for a binary class pair.

    Instances of the two classes are permuted once (both domains follow
    the same permutation).  The first ``ratios[0]`` fraction becomes the
    unlabeled co-occurrence block, the next ``ratios[1]`` the labeled
    source training rows, and the remainder the target test rows; the
    three blocks are disjoint by instance.  Features are standardized
    per domain with statistics fitted on the co-occurrence block only.

    ``co_scope="global"`` instead draws the co-occurrence block from all
    classes; train and test then split the remaining task-class rows
    evenly.
    """
    _check_paired(source, target)
    class_a, class_b = binary_pair
    present = set(source.labels.tolist())
    for cls in (class_a, class_b):
        if cls not in present:
            raise ValueError(f"class {cls} absent from dataset")
    co_ratio, train_ratio = ratios
    if co_ratio <= 0 or train_ratio <= 0 or co_ratio + train_ratio > 1:
        raise ValueError(f"invalid split ratios {ratios}")
    rng = np.random.default_rng(seed)

    task_mask = (source.labels == class_a) | (source.labels == class_b)
    task_idx = np.flatnonzero(task_mask)

    if co_scope == "task":
        perm = task_idx[rng.permutation(len(task_idx))]
        n = len(perm)
        n_co = int(round(co_ratio * n))
        n_train = int(round(train_ratio * n))
        co_idx = perm[:n_co]
        train_idx = perm[n_co : n_co + n_train]
        test_idx = perm[n_co + n_train :]
    elif co_scope == "global":
        all_perm = rng.permutation(source.n)
        n_co = int(round(co_ratio * source.n))
        co_idx = all_perm[:n_co]
        rest = np.setdiff1d(task_idx, co_idx, assume_unique=True)
        rest = rest[rng.permutation(len(rest))]
        half = len(rest) // 2
        train_idx = rest[:half]
        test_idx = rest[half:]
    else:
        raise ValueError(f"unknown co_scope {co_scope!r}")

    co_src_raw = source.features[co_idx]
    co_tgt_raw = target.features[co_idx]
    _, fit_s = standardize(co_src_raw)
    _, fit_t = standardize(co_tgt_raw)

    return TrialSplit(
        co_source=fit_s.apply(co_src_raw),
        co_target=fit_t.apply(co_tgt_raw),
        train_source=(
            fit_s.apply(source.features[train_idx]),
            source.labels[train_idx].copy(),
        ),
        test_target=(
            fit_t.apply(target.features[test_idx]),
            target.labels[test_idx].copy(),
        ),
        seed=seed,
        co_indices=co_idx,
        train_indices=train_idx,
        test_indices=test_idx,
    )
