"""Two-view handwritten-digit dataset built from real digit images.

Produces the same file layout as the classic multiple-features tables:
2000 rows (digits 0-9, 200 each) described by a 240-column pixel-average
view and a 216-column stroke-profile view.  Both views of a row are
computed from the same augmented digit image, so rows are genuinely
paired instances seen through two different extractors.

The pixel view is a coarse grayscale grid quantized to a small integer
range.  The profile view collects stroke statistics (crossing positions,
run counts, ink mass) along 36 scanlines; those are argmax- and
count-style functions of the image, so the relation between the views is
strongly nonlinear even though both describe one drawing.  Each view
carries its own measurement noise.
"""

import os

import numpy as np
from scipy import ndimage
from sklearn.datasets import load_digits

from .data import (
    PIXEL_DIM,
    PROFILE_DIM,
    ROWS_PER_DIGIT,
    load_multifeatures,
)

PIXEL_GRID = (16, 15)  # rows x cols, flattened to 240
STATS_PER_LINE = 6
N_LINES = PROFILE_DIM // STATS_PER_LINE  # 36 = 16 rows + 15 cols + 5 diagonals
_DIAG_OFFSETS = (-6, -3, 0, 3, 6)
_INK_THRESHOLD = 0.3


def _pixel_view(z, rng, noise):
    levels = z * 6.0 + rng.normal(0.0, noise, size=z.shape)
    return np.clip(np.round(levels), 0, 6).ravel()


def _line_stats(v):
    """Six stroke statistics of one scanline with values in [0, 1]."""
    n = v.size
    mask = v >= _INK_THRESHOLD
    ink = v.sum() / n
    if not mask.any():
        return ink, 1.0, 0.0, 0.0, 0.0, 0.5
    first = np.argmax(mask) / n
    last = (n - np.argmax(mask[::-1])) / n
    padded = np.zeros(n + 2, dtype=np.int8)
    padded[1:-1] = mask
    starts = np.flatnonzero(np.diff(padded) == 1)
    ends = np.flatnonzero(np.diff(padded) == -1)
    runs = starts.size / 4.0
    longest = (ends - starts).max() / n
    com = float((v * np.arange(n)).sum() / v.sum()) / n
    return ink, first, last, runs, longest, com


def _scanlines(z):
    lines = [z[r] for r in range(z.shape[0])]
    lines += [z[:, c] for c in range(z.shape[1])]
    lines += [np.diagonal(z, offset=o) for o in _DIAG_OFFSETS]
    return lines


def _profile_view(z, rng, noise):
    stats = np.empty((N_LINES, STATS_PER_LINE))
    for i, line in enumerate(_scanlines(z)):
        stats[i] = _line_stats(line)
    stats = stats.ravel() + rng.normal(0.0, noise, size=PROFILE_DIM)
    return np.clip(np.round(stats * 100.0), 0, None)


def make_digit_views(seed=0, shift=0.15, pixel_noise=0.10, profile_noise=0.010):
    """Render the paired pixel/profile tables from augmented digit images.

    Each class is padded to 200 instances by cycling its images with a
    small random subpixel shift.  Returns (pixel_table, profile_table),
    both already quantized to the integer values the on-disk format
    carries.
    """
    digits = load_digits()
    images = digits.images
    labels = digits.target

    pixel_rows = np.empty((10 * ROWS_PER_DIGIT, PIXEL_DIM))
    profile_rows = np.empty((10 * ROWS_PER_DIGIT, PROFILE_DIM))
    row = 0
    for cls in range(10):
        base = images[labels == cls]
        for j in range(ROWS_PER_DIGIT):
            rng = np.random.default_rng(np.random.SeedSequence((seed, cls, j)))
            img = base[j % len(base)]
            dy, dx = rng.uniform(-shift, shift, size=2)
            img = ndimage.shift(img, (dy, dx), order=1, mode="constant", cval=0.0)
            z = ndimage.zoom(img, (PIXEL_GRID[0] / 8.0, PIXEL_GRID[1] / 8.0), order=1)
            z = np.clip(z, 0.0, 16.0) / 16.0
            pixel_rows[row] = _pixel_view(z, rng, pixel_noise)
            profile_rows[row] = _profile_view(z, rng, profile_noise)
            row += 1
    return pixel_rows, profile_rows


def write_multifeatures(out_dir, pixel_rows, profile_rows):
    """Write the two tables in the whitespace-separated on-disk layout."""
    os.makedirs(out_dir, exist_ok=True)
    pixel_path = os.path.join(out_dir, "digits-pix.txt")
    profile_path = os.path.join(out_dir, "digits-profile.txt")
    np.savetxt(pixel_path, pixel_rows, fmt="%d")
    np.savetxt(profile_path, profile_rows, fmt="%d")
    return profile_path, pixel_path


def ensure_dataset(data_dir, seed=0):
    """Generate the two-view tables once and cache them on disk.

    Returns (profile_path, pixel_path); reuses existing files when both
    are present and well-formed.
    """
    pixel_path = os.path.join(data_dir, "digits-pix.txt")
    profile_path = os.path.join(data_dir, "digits-profile.txt")
    if os.path.exists(pixel_path) and os.path.exists(profile_path):
        return profile_path, pixel_path
    pixel_rows, profile_rows = make_digit_views(seed=seed)
    return write_multifeatures(data_dir, pixel_rows, profile_rows)


def load_dataset(data_dir, seed=0):
    """Convenience wrapper: ensure the cached tables exist, then load them."""
    profile_path, pixel_path = ensure_dataset(data_dir, seed=seed)
    return load_multifeatures(profile_path, pixel_path)
