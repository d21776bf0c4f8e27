"""Run orchestration: toy-model inference over a dataset manifest, grouping
evaluation, and saliency evaluation, all file-based and deterministic.

Stimuli come from either this package's dataset manifests (single label-map
mask per stimulus) or an ingestion manifest of records with explicit target
and distractor mask files. Parallelism is capped by GROUPLENS_THREADS; every
unit of work is a pure function of its inputs, so results are identical at
any thread count.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import mapio, toyvit
from .errors import IntegrityError
from .grouping_metrics import (
    StimulusScores, aggregate, labels_to_grid, normalize_channels, score_channels,
)
from .saliency import (
    FixationParams, FixationTrace, SaliencyRatios, build_saliency_map,
    bilinear_resize, default_suppression_radius, detection_rates, msr_ratios,
    run_fixations,
)
from .stimgen import load_image_png

MODEL_INPUT_SIDE = 224


def thread_count() -> int:
    env = os.environ.get("GROUPLENS_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def parallel_map(fn, items: list):
    """Order-preserving map over independent work items."""
    items = list(items)
    n = thread_count()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# -- evaluation records ------------------------------------------------------

def _as_label_plane(mask: np.ndarray) -> np.ndarray:
    """Label maps are single-channel; tolerate RGB copies of them."""
    return mask[:, :, 0] if mask.ndim == 3 else mask


@dataclass
class EvalRecord:
    stimulus_id: str
    feature_dim: str
    image_path: Path
    mask_path: Path | None = None            # combined label map {0,1,2}
    target_mask_path: Path | None = None     # ingestion style
    distractor_mask_path: Path | None = None

    def masks(self) -> tuple[np.ndarray, np.ndarray]:
        """(target, distractor) boolean pixel masks."""
        if self.mask_path is not None:
            labels = _as_label_plane(load_image_png(self.mask_path))
            return labels == 1, labels == 2
        target = _as_label_plane(load_image_png(self.target_mask_path)) == 1
        distr = _as_label_plane(load_image_png(self.distractor_mask_path)) == 2
        return target, distr

    def label_map(self) -> np.ndarray:
        if self.mask_path is not None:
            return _as_label_plane(load_image_png(self.mask_path))
        target, distr = self.masks()
        labels = np.zeros(target.shape, dtype=np.uint8)
        labels[target] = 1
        labels[distr] = 2
        return labels


def load_eval_records(manifest_path: str | Path) -> tuple[list[EvalRecord], dict]:
    """Read a dataset manifest or an ingestion manifest into eval records."""
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise IntegrityError(f"{manifest_path}: cannot read manifest: {e}") from e
    raw = doc["records"] if isinstance(doc, dict) else doc
    root = manifest_path.parent
    records = []
    for i, rec in enumerate(raw):
        image_path = root / rec["image_path"]
        if not image_path.exists():
            raise IntegrityError(f"missing stimulus image {image_path}")
        stim_id = str(rec.get("id") or Path(rec["image_path"]).stem)
        if "mask_path" in rec:
            records.append(EvalRecord(
                stimulus_id=stim_id,
                feature_dim=rec.get("feature_dim", "unknown"),
                image_path=image_path,
                mask_path=root / rec["mask_path"],
            ))
        elif "target_mask_path" in rec:
            records.append(EvalRecord(
                stimulus_id=stim_id,
                feature_dim=rec.get("feature_dim", "unknown"),
                image_path=image_path,
                target_mask_path=root / rec["target_mask_path"],
                distractor_mask_path=root / rec["distractor_mask_path"],
            ))
        else:
            raise IntegrityError(f"record {i} has neither mask_path nor target_mask_path")
    meta = {
        "dataset_id": doc.get("dataset_id", manifest_path.stem) if isinstance(doc, dict) else manifest_path.stem,
        "seed": doc.get("seed") if isinstance(doc, dict) else None,
    }
    return records, meta


# -- toy-model runs ------------------------------------------------------------

def run_toy(dataset_manifest: str | Path, config: toyvit.ModelConfig,
            maps_dir: str | Path, kinds: tuple[str, ...] = mapio.MAP_KINDS,
            input_side: int = MODEL_INPUT_SIDE,
            weights_index: str | Path | None = None,
            save_weights_dir: str | Path | None = None) -> Path:
    """Forward the toy model over every stimulus, writing one map file per
    (stimulus, block, kind). Returns the run manifest path."""
    config.validate()
    for kind in kinds:
        if kind not in mapio.MAP_KINDS:
            raise IntegrityError(f"unknown map kind {kind!r}")
    records, ds_meta = load_eval_records(dataset_manifest)
    maps_dir = Path(maps_dir)
    grid = input_side // config.patch_size
    num_patches = grid * grid
    if weights_index is not None:
        weights = toyvit.load_weights(weights_index, config)
    else:
        weights = toyvit.init_weights(config, num_patches)
    model_id = (
        f"toyvit-p{config.patch_size}-d{config.embed_dim}-h{config.heads}"
        f"-L{config.blocks}-s{config.seed}"
    )
    if save_weights_dir is not None:
        toyvit.save_weights(weights, save_weights_dir)

    def process(rec: EvalRecord) -> dict:
        image = load_image_png(rec.image_path).astype(np.float64) / 255.0
        if image.ndim == 2:
            image = np.repeat(image[:, :, None], 3, axis=2)
        image = image[:, :, :3]
        if image.shape[:2] != (input_side, input_side):
            image = bilinear_resize(image, (input_side, input_side))
        trace = toyvit.forward(image, config, weights)
        maps = {}
        for block in range(config.blocks):
            for kind in kinds:
                data = trace.attn_out[block] if kind == "attn_out" else trace.feat_resid[block]
                stack = mapio.MapStack(
                    data=np.asarray(data, dtype=np.float32), kind=kind,
                    block_index=block, model_id=model_id, stimulus_id=rec.stimulus_id,
                )
                path = mapio.map_path(maps_dir, model_id, rec.stimulus_id, block, kind)
                mapio.write_map(stack, path)
                maps[f"block{block}_{kind}"] = str(path.relative_to(maps_dir))
        return {"stimulus_id": rec.stimulus_id, "feature_dim": rec.feature_dim,
                "maps": maps}

    stimuli = parallel_map(process, records)
    manifest = mapio.RunManifest(
        model_id=model_id,
        num_blocks=config.blocks,
        grids=[[grid, grid]] * config.blocks,
        kinds=list(kinds),
        stimuli=stimuli,
        dataset_manifest=str(dataset_manifest),
        config={
            "model": config.to_dict(),
            "input_side": input_side,
            "dataset_id": ds_meta["dataset_id"],
            "dataset_seed": ds_meta["seed"],
        },
    )
    manifest_path = maps_dir / "run_manifest.json"
    mapio.write_manifest(manifest, manifest_path)
    return manifest_path


# -- grouping evaluation ---------------------------------------------------------

def shuffle_group_labels(grid_labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Permute group labels among the figure cells (background untouched);
    the label-shuffle control for the grouping signal."""
    out = grid_labels.copy()
    figure = out > 0
    values = out[figure]
    out[figure] = rng.permutation(values)
    return out


def score_grouping_run(run_manifest_path: str | Path,
                       dataset_manifest: str | Path,
                       label_transform=None,
                       grid_mode: str = "presence") -> tuple[list[StimulusScores], mapio.RunManifest]:
    """Per-stimulus per-block channel scores from a run's attention maps.

    grid_mode picks the mask-to-grid rule; the presence default keeps
    figures that cover less than half their token cell (thin bars, stars,
    small sizes) from vanishing into the background region.

    label_transform(grid_labels, stimulus_id, block) -> grid_labels lets
    callers run label-shuffle controls through the identical scoring path.
    """
    run_manifest_path = Path(run_manifest_path)
    run = mapio.read_manifest(run_manifest_path)
    if "attn_out" not in run.kinds:
        raise IntegrityError("run manifest has no attention maps to score")
    records, _ = load_eval_records(dataset_manifest)
    by_id = {r.stimulus_id: r for r in records}
    root = run_manifest_path.parent

    def score_one(rec_entry: dict) -> list[StimulusScores]:
        stim_id = rec_entry["stimulus_id"]
        rec = by_id.get(stim_id)
        if rec is None:
            raise IntegrityError(f"run references unknown stimulus {stim_id}")
        labels = rec.label_map()
        out = []
        for block in range(run.num_blocks):
            grid = tuple(run.grids[block])
            glabels = labels_to_grid(labels, grid, mode=grid_mode)
            if label_transform is not None:
                glabels = label_transform(glabels, stim_id, block)
            stack = mapio.read_map(root / rec_entry["maps"][f"block{block}_attn_out"])
            scores = score_channels(normalize_channels(stack.data), glabels)
            out.append(StimulusScores(
                model_id=run.model_id, stimulus_id=stim_id, block_index=block,
                feature_dim=rec_entry.get("feature_dim") or rec.feature_dim,
                channels=scores,
            ))
        return out

    nested = parallel_map(score_one, run.stimuli)
    return [s for group in nested for s in group], run


def eval_grouping(run_manifest_path: str | Path, dataset_manifest: str | Path,
                  out_dir: str | Path, grid_mode: str = "presence"):
    """Aggregate GI/AR summaries and write the grouping report files."""
    from . import report

    scored, run = score_grouping_run(run_manifest_path, dataset_manifest,
                                     grid_mode=grid_mode)
    summaries = aggregate(scored)
    _, ds_meta = load_eval_records(dataset_manifest)
    config = {
        "run": run.config, "model_id": run.model_id,
        "dataset_id": ds_meta["dataset_id"], "dataset_seed": ds_meta["seed"],
        "grid_mode": grid_mode,
    }
    out_dir = Path(out_dir)
    csv_path = report.write_grouping_csv(out_dir / "grouping_summary.csv", summaries, config)
    json_path = report.write_grouping_json(out_dir / "grouping_summary.json", summaries, config)
    return summaries, csv_path, json_path


# -- saliency evaluation -----------------------------------------------------------

@dataclass
class SaliencyOutcome:
    stimulus_id: str
    feature_dim: str
    kind: str
    block_index: int
    trace: FixationTrace
    ratios: SaliencyRatios


def eval_saliency(run_manifest_path: str | Path, dataset_manifest: str | Path,
                  out_dir: str | Path, max_fixations: int = 100,
                  thresholds: tuple[int, ...] = (15, 25, 50, 100),
                  radius: int | None = None, kinds: tuple[str, ...] | None = None,
                  detection_dilation: int = 0, mode: str = "bilinear"):
    """Fixation traces, detection rates, and MSR ratios for every recorded
    map kind; writes detection and MSR reports."""
    from . import report

    run_manifest_path = Path(run_manifest_path)
    run = mapio.read_manifest(run_manifest_path)
    kinds = tuple(kinds) if kinds else tuple(run.kinds)
    for kind in kinds:
        if kind not in run.kinds:
            raise IntegrityError(f"run has no {kind!r} maps")
    records, ds_meta = load_eval_records(dataset_manifest)
    by_id = {r.stimulus_id: r for r in records}
    root = run_manifest_path.parent

    def process(rec_entry: dict) -> list[SaliencyOutcome]:
        stim_id = rec_entry["stimulus_id"]
        rec = by_id.get(stim_id)
        if rec is None:
            raise IntegrityError(f"run references unknown stimulus {stim_id}")
        target, distr = rec.masks()
        eval_dims = target.shape
        out = []
        for kind in kinds:
            for block in range(run.num_blocks):
                stack = mapio.read_map(root / rec_entry["maps"][f"block{block}_{kind}"])
                salmap = build_saliency_map(stack, eval_dims, mode=mode)
                r = radius if radius is not None else default_suppression_radius(
                    eval_dims[1], run.grids[block][1])
                params = FixationParams(
                    max_fixations=max_fixations, suppression_radius=r,
                    thresholds=tuple(thresholds), detection_dilation=detection_dilation,
                )
                trace = run_fixations(salmap, target, params)
                ratios = msr_ratios(salmap.data, target, distr)
                out.append(SaliencyOutcome(
                    stimulus_id=stim_id,
                    feature_dim=rec_entry.get("feature_dim") or rec.feature_dim,
                    kind=kind, block_index=block, trace=trace, ratios=ratios,
                ))
        return out

    outcomes = [o for group in parallel_map(process, run.stimuli) for o in group]

    # detection rates per (block, kind, feature_dim)
    rate_rows = []
    by_key: dict[tuple[int, str, str], list[FixationTrace]] = {}
    for o in outcomes:
        by_key.setdefault((o.block_index, o.kind, o.feature_dim), []).append(o.trace)
    for (block, kind, dim), traces in sorted(by_key.items()):
        rates = detection_rates(traces, tuple(thresholds))
        for t in thresholds:
            rate_rows.append({
                "model_id": run.model_id, "block": block, "kind": kind,
                "feature_dim": dim, "threshold": t,
                "detection_rate": rates[t], "n": len(traces),
            })

    # MSR per (block, kind)
    msr_rows = []
    by_bk: dict[tuple[int, str], list[SaliencyRatios]] = {}
    for o in outcomes:
        by_bk.setdefault((o.block_index, o.kind), []).append(o.ratios)
    for (block, kind), ratios in sorted(by_bk.items()):
        targ = [x.msr_targ for x in ratios if x.msr_targ is not None]
        bg = [x.msr_bg for x in ratios if x.msr_bg is not None]
        msr_rows.append({
            "model_id": run.model_id, "block": block, "kind": kind,
            "mean_msr_targ": float(np.mean(targ)) if targ else None,
            "mean_msr_bg": float(np.mean(bg)) if bg else None,
            "n_defined": len(targ), "n_defined_bg": len(bg),
            "n_undefined": len(ratios) - len(targ),
        })

    n_cells = int(run.grids[0][0]) * int(run.grids[0][1])
    config = {
        "run": run.config, "model_id": run.model_id,
        "dataset_id": ds_meta["dataset_id"], "dataset_seed": ds_meta["seed"],
        "max_fixations": max_fixations, "thresholds": list(thresholds),
        "suppression_radius": radius, "detection_dilation": detection_dilation,
        "upsampling": mode,
    }
    out_dir = Path(out_dir)
    files = report.write_saliency_reports(out_dir, rate_rows, msr_rows, config, n_cells)
    return rate_rows, msr_rows, files
