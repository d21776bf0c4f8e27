"""Grouping scores over label grids: per-channel normalization, region means,
grouping index, figure-background attention ratio, and block aggregation.

Per channel c the grouping index is |A_g1 - A_g2| / (A_g1 + A_g2) and the
attention ratio is max(A_g1, A_g2) / A_bkg, where A_* are mean normalized
scores over grid cells labeled group 1, group 2, and background. Channels
with A_g1 = A_g2 = 0 are excluded from both metrics (the channel never
responded to either group); channels with A_bkg = 0 keep their grouping
index but are excluded from the ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, ShapeError


def normalize_channels(data: np.ndarray) -> np.ndarray:
    """Min-max normalize each channel over its spatial positions to [0, 1].

    Constant channels map to all zeros, which routes them into the
    both-groups-zero exclusion downstream.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 3:
        raise ShapeError(f"expected H x W x C, got {data.shape}")
    lo = data.min(axis=(0, 1), keepdims=True)
    hi = data.max(axis=(0, 1), keepdims=True)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = (data - lo) / safe
    out[:, :, (span == 0).ravel()] = 0.0
    return out


def labels_to_grid(labels: np.ndarray, grid_hw: tuple[int, int],
                   mode: str = "majority") -> np.ndarray:
    """Downsample a pixel label map to grid cells.

    "majority": a cell gets label g in {1, 2} iff strictly more than half of
    its pixels carry g; everything else (including exact ties) is background.

    "presence": a cell gets the label of the figure pixels it contains; a
    figure smaller than half its cell still claims the cell. Cells holding
    both groups fall back to the larger figure count, ties to background.
    Without this mode, token-sized stimuli whose figures cover under half a
    cell (thin bars, stars, small sizes) would produce no figure cells at all.

    When the image dims are not divisible by the grid, pixels go to the
    nearest cell.
    """
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ShapeError(f"expected H x W labels, got {labels.shape}")
    if mode not in ("majority", "presence"):
        raise ContractViolation(f"unknown grid labeling mode {mode!r}")
    h, w = grid_hw
    H, W = labels.shape
    row_cell = (np.arange(H) * h) // H
    col_cell = (np.arange(W) * w) // W
    cell_id = (row_cell[:, None] * w + col_cell[None, :]).ravel()
    flat = labels.ravel()
    total = np.bincount(cell_id, minlength=h * w)
    c1 = np.bincount(cell_id[flat == 1], minlength=h * w)
    c2 = np.bincount(cell_id[flat == 2], minlength=h * w)
    grid = np.zeros(h * w, dtype=np.uint8)
    if mode == "majority":
        grid[2 * c1 > total] = 1
        grid[2 * c2 > total] = 2
    else:
        grid[c1 > c2] = 1
        grid[c2 > c1] = 2
    return grid.reshape(h, w)


@dataclass
class RegionMeans:
    """Per-channel mean normalized scores for group 1, group 2, background."""

    a_g1: np.ndarray
    a_g2: np.ndarray
    a_bkg: np.ndarray
    included_gi: np.ndarray   # bool per channel
    included_ar: np.ndarray


def region_means(norm_data: np.ndarray, grid_labels: np.ndarray) -> RegionMeans:
    """Arithmetic region means per channel; empty regions clear inclusion."""
    norm_data = np.asarray(norm_data, dtype=np.float64)
    grid_labels = np.asarray(grid_labels)
    if norm_data.shape[:2] != grid_labels.shape:
        raise ShapeError(
            f"map grid {norm_data.shape[:2]} != label grid {grid_labels.shape}"
        )
    c = norm_data.shape[2]
    flat = norm_data.reshape(-1, c)
    lab = grid_labels.ravel()

    def mean_of(region: np.ndarray) -> tuple[np.ndarray, int]:
        count = int(region.sum())
        if count == 0:
            return np.zeros(c), 0
        return flat[region].mean(axis=0), count

    a1, n1 = mean_of(lab == 1)
    a2, n2 = mean_of(lab == 2)
    ab, nb = mean_of(lab == 0)
    included_gi = np.full(c, n1 > 0 and n2 > 0)
    included_gi &= ~((a1 == 0) & (a2 == 0))
    included_ar = included_gi & (nb > 0) & (ab > 0)
    return RegionMeans(a_g1=a1, a_g2=a2, a_bkg=ab,
                       included_gi=included_gi, included_ar=included_ar)


def grouping_index(means: RegionMeans, channels=None) -> np.ndarray:
    """|A_g1 - A_g2| / (A_g1 + A_g2) for the requested (default: all included)
    channels. Asking for an excluded channel is a contract violation."""
    if channels is None:
        channels = np.flatnonzero(means.included_gi)
    channels = np.atleast_1d(channels)
    if not means.included_gi[channels].all():
        raise ContractViolation("grouping index requested for an excluded channel")
    a, b = means.a_g1[channels], means.a_g2[channels]
    return np.abs(a - b) / (a + b)


def attention_ratio(means: RegionMeans, channels=None) -> np.ndarray:
    """max(A_g1, A_g2) / A_bkg for the requested (default: all included)
    channels. Asking for a channel with A_bkg = 0 is a contract violation."""
    if channels is None:
        channels = np.flatnonzero(means.included_ar)
    channels = np.atleast_1d(channels)
    if not means.included_ar[channels].all():
        raise ContractViolation("attention ratio requested for an excluded channel")
    return np.maximum(means.a_g1[channels], means.a_g2[channels]) / means.a_bkg[channels]


@dataclass
class ChannelScore:
    channel: int
    gi: float | None
    ar: float | None


def score_channels(norm_data: np.ndarray, grid_labels: np.ndarray) -> list[ChannelScore]:
    """Region means -> per-channel GI/AR with the exclusion rules applied."""
    means = region_means(norm_data, grid_labels)
    scores = []
    for ch in range(norm_data.shape[2]):
        gi = float(grouping_index(means, ch)[0]) if means.included_gi[ch] else None
        ar = float(attention_ratio(means, ch)[0]) if means.included_ar[ch] else None
        scores.append(ChannelScore(channel=ch, gi=gi, ar=ar))
    return scores


@dataclass
class StimulusScores:
    model_id: str
    stimulus_id: str
    block_index: int
    feature_dim: str
    channels: list[ChannelScore] = field(default_factory=list)


@dataclass
class BlockSummary:
    model_id: str
    block_index: int
    feature_dim: str
    mean_gi: float | None
    mean_ar: float | None
    n_stimuli_gi: int
    n_stimuli_ar: int
    n_channels_gi: int
    n_channels_ar: int


def aggregate(scored: list[StimulusScores]) -> list[BlockSummary]:
    """Two-stage mean: channels within a stimulus, then across stimuli,
    keyed by (block, feature dimension)."""
    if not scored:
        return []
    model_ids = {s.model_id for s in scored}
    if len(model_ids) > 1:
        raise ContractViolation(f"scores mix model ids: {sorted(model_ids)}")
    by_key: dict[tuple[int, str], list[StimulusScores]] = {}
    for s in scored:
        by_key.setdefault((s.block_index, s.feature_dim), []).append(s)

    summaries = []
    for (block, dim), group in sorted(by_key.items()):
        gi_means, ar_means = [], []
        n_ch_gi = n_ch_ar = 0
        for s in group:
            gi_vals = [c.gi for c in s.channels if c.gi is not None]
            ar_vals = [c.ar for c in s.channels if c.ar is not None]
            n_ch_gi += len(gi_vals)
            n_ch_ar += len(ar_vals)
            if gi_vals:
                gi_means.append(float(np.mean(gi_vals)))
            if ar_vals:
                ar_means.append(float(np.mean(ar_vals)))
        summaries.append(BlockSummary(
            model_id=group[0].model_id, block_index=block, feature_dim=dim,
            mean_gi=float(np.mean(gi_means)) if gi_means else None,
            mean_ar=float(np.mean(ar_means)) if ar_means else None,
            n_stimuli_gi=len(gi_means), n_stimuli_ar=len(ar_means),
            n_channels_gi=n_ch_gi, n_channels_ar=n_ch_ar,
        ))
    return summaries
