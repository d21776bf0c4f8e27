"""Batched extraction of per-block maps into the map-exchange layout.

Output contract (shared with the scoring toolkit, file-level only):
  <out>/<model_dir>/<stimulus_id>/block<k>_<kind>.npy   NPY v1.0, <f4, [H, W, C]
  <out>/<model_dir>/<stimulus_id>/block<k>_<kind>.meta.json
  <out>/run_manifest.json
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .adapters import BlockRecorder, UnsupportedModelError, check_supported

MAP_KINDS = ("attn_out", "feat_resid")

# preprocessing defaults per architecture family when no hub image processor
# is reachable; matches the published preprocessor configs
FAMILY_NORMALIZATION = {
    "vit": ([0.5, 0.5, 0.5], [0.5, 0.5, 0.5]),
    "beit": ([0.5, 0.5, 0.5], [0.5, 0.5, 0.5]),
    "deit": ([0.485, 0.456, 0.406], [0.229, 0.224, 0.225]),
}


@dataclass
class ExtractionSpec:
    model_id: str
    dataset_manifest: str | Path
    out_dir: str | Path
    kinds: tuple[str, ...] = MAP_KINDS
    device: str = "cpu"
    batch_size: int = 8

    def validate(self) -> None:
        for kind in self.kinds:
            if kind not in MAP_KINDS:
                raise ValueError(f"unknown map kind {kind!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def load_model(model_id: str):
    """Resolve a hub identifier or local checkpoint directory."""
    from transformers import AutoModel

    try:
        model = AutoModel.from_pretrained(model_id)
    except Exception as e:  # noqa: BLE001 - surface resolution failures as one kind
        raise UnsupportedModelError(f"cannot resolve model {model_id!r}: {e}") from e
    return model


def read_records(manifest_path: Path) -> list[dict]:
    doc = json.loads(manifest_path.read_text())
    raw = doc["records"] if isinstance(doc, dict) else doc
    root = manifest_path.parent
    records = []
    for rec in raw:
        image_path = root / rec["image_path"]
        if not image_path.exists():
            raise FileNotFoundError(f"missing stimulus image {image_path}")
        records.append({
            "stimulus_id": str(rec.get("id") or Path(rec["image_path"]).stem),
            "feature_dim": rec.get("feature_dim", "unknown"),
            "image_path": image_path,
        })
    return records


def preprocess(image_path: Path, side: int, mean, std) -> torch.Tensor:
    """PIL bilinear resize to the model's input side, scale, normalize."""
    with Image.open(image_path) as im:
        im = im.convert("RGB").resize((side, side), Image.BILINEAR)
        array = np.asarray(im, dtype=np.float32) / 255.0
    array = (array - np.asarray(mean, dtype=np.float32)) / np.asarray(std, dtype=np.float32)
    return torch.from_numpy(array.transpose(2, 0, 1))


def write_npy_with_meta(path: Path, data: np.ndarray, meta: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.ascontiguousarray(data, dtype="<f4")
    if not np.all(np.isfinite(data)):
        raise ValueError(f"non-finite values in map for {path}")
    np.save(path, data)
    path.with_name(path.stem + ".meta.json").write_text(json.dumps(meta, indent=1))


@dataclass
class _RunState:
    grids: list[list[int]] = field(default_factory=list)
    stimuli: list[dict] = field(default_factory=list)


def extract(spec: ExtractionSpec, model=None) -> Path:
    """Run the model over every stimulus and write one map file per
    (stimulus, block, kind). Returns the run manifest path.

    `model` overrides hub resolution (local fine-tunes, randomly initialized
    configs in tests).
    """
    spec.validate()
    if model is None:
        model = load_model(spec.model_id)
    model_type = check_supported(model)
    model = model.to(spec.device).eval()

    config = model.config
    side = int(getattr(config, "image_size", 224))
    patch = int(getattr(config, "patch_size", 16))
    grid = side // patch
    mean, std = FAMILY_NORMALIZATION[model_type]

    manifest_path = Path(spec.dataset_manifest)
    records = read_records(manifest_path)
    out_dir = Path(spec.out_dir)
    model_dir = spec.model_id.replace("/", "__")

    state = _RunState()
    with BlockRecorder(model) as recorder, torch.no_grad():
        for start in range(0, len(records), spec.batch_size):
            batch = records[start:start + spec.batch_size]
            pixels = torch.stack([
                preprocess(rec["image_path"], side, mean, std) for rec in batch
            ]).to(spec.device)
            model(pixel_values=pixels)

            n_blocks = len(recorder.layers)
            seq_len = recorder.attn_out[0].shape[1]
            n_prefix = seq_len - grid * grid
            if n_prefix < 0:
                raise UnsupportedModelError(
                    f"{spec.model_id}: {seq_len} tokens do not cover a "
                    f"{grid}x{grid} grid; a per-model reshaper would be required"
                )
            if not state.grids:
                state.grids = [[grid, grid] for _ in range(n_blocks)]

            for bi, rec in enumerate(batch):
                maps = {}
                for block in range(n_blocks):
                    for kind in spec.kinds:
                        source = (recorder.attn_out if kind == "attn_out"
                                  else recorder.feat_resid)
                        tokens = source[block][bi, n_prefix:].cpu().numpy()
                        data = tokens.reshape(grid, grid, -1)
                        rel = Path(model_dir) / rec["stimulus_id"] / f"block{block}_{kind}.npy"
                        write_npy_with_meta(out_dir / rel, data, {
                            "kind": kind, "block_index": block,
                            "model_id": spec.model_id,
                            "stimulus_id": rec["stimulus_id"],
                        })
                        maps[f"block{block}_{kind}"] = str(rel)
                state.stimuli.append({
                    "stimulus_id": rec["stimulus_id"],
                    "feature_dim": rec["feature_dim"],
                    "maps": maps,
                })

    run_manifest = {
        "model_id": spec.model_id,
        "num_blocks": len(state.grids),
        "grids": state.grids,
        "kinds": list(spec.kinds),
        "dataset_manifest": str(spec.dataset_manifest),
        "config": {
            "model_type": model_type,
            "input_side": side,
            "patch_size": patch,
            "hidden_size": int(getattr(config, "hidden_size", 0)),
            "normalization": {"mean": mean, "std": std},
        },
        "stimuli": state.stimuli,
    }
    out_path = out_dir / "run_manifest.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(run_manifest, indent=1, sort_keys=True))
    return out_path
