"""Bit-exact tensor exchange between generation, models, and metric engines.

Maps travel as NPY version 1.0 files (little-endian float32, C order) with a
JSON sidecar for metadata, so any producer that can emit the documented NPY
byte layout interoperates. The reader is deliberately strict: anything other
than little-endian float32 v1.0 is rejected instead of converted.
"""

from __future__ import annotations

import ast
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, IntegrityError, NumericError

NPY_MAGIC = b"\x93NUMPY"
MAP_KINDS = ("attn_out", "feat_resid")


# -- low-level NPY v1.0 ---------------------------------------------------

def write_npy(path: str | Path, data: np.ndarray) -> None:
    """Write a float32 array as NPY v1.0 (little-endian, C order).

    Input arrays of other float dtypes are cast to float32 first; NaN/Inf
    are rejected.
    """
    arr = np.ascontiguousarray(data, dtype="<f4")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"refusing to write non-finite values to {path}")
    header = {
        "descr": "<f4",
        "fortran_order": False,
        "shape": tuple(int(s) for s in arr.shape),
    }
    header_str = (
        "{'descr': '%s', 'fortran_order': %s, 'shape': %s, }"
        % (header["descr"], header["fortran_order"], header["shape"])
    )
    # magic(6) + version(2) + hlen(2) + header must be a multiple of 64
    base = len(NPY_MAGIC) + 2 + 2
    pad = 64 - ((base + len(header_str) + 1) % 64)
    header_bytes = (header_str + " " * pad + "\n").encode("latin1")
    with open(path, "wb") as f:
        f.write(NPY_MAGIC)
        f.write(b"\x01\x00")
        f.write(struct.pack("<H", len(header_bytes)))
        f.write(header_bytes)
        f.write(arr.tobytes(order="C"))


def read_npy(path: str | Path) -> np.ndarray:
    """Read a strict NPY v1.0 little-endian float32 file."""
    with open(path, "rb") as f:
        magic = f.read(6)
        if magic != NPY_MAGIC:
            raise FormatError(f"{path}: missing NPY magic")
        version = f.read(2)
        if version != b"\x01\x00":
            raise FormatError(f"{path}: unsupported NPY version {version!r}")
        (hlen,) = struct.unpack("<H", f.read(2))
        try:
            header = ast.literal_eval(f.read(hlen).decode("latin1"))
        except (ValueError, SyntaxError) as e:
            raise FormatError(f"{path}: unparseable NPY header: {e}") from e
        if not isinstance(header, dict):
            raise FormatError(f"{path}: NPY header is not a dict")
        if header.get("descr") != "<f4":
            raise FormatError(
                f"{path}: dtype {header.get('descr')!r} rejected, "
                "only little-endian float32 is accepted"
            )
        if header.get("fortran_order"):
            raise FormatError(f"{path}: fortran_order arrays are not accepted")
        shape = header.get("shape")
        if not isinstance(shape, tuple) or not all(
            isinstance(s, int) and s >= 0 for s in shape
        ):
            raise FormatError(f"{path}: bad shape {shape!r}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = f.read(count * 4)
        if len(raw) != count * 4:
            raise FormatError(
                f"{path}: truncated data, expected {count * 4} bytes, got {len(raw)}"
            )
    return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()


# -- map stacks -----------------------------------------------------------

@dataclass
class MapStack:
    """One H x W x C float32 map for a (stimulus, block, kind) triple."""

    data: np.ndarray
    kind: str
    block_index: int
    model_id: str
    stimulus_id: str

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data)
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise FormatError(f"map data must be H x W x C, got {self.data.shape}")
        if self.kind not in MAP_KINDS:
            raise FormatError(f"unknown map kind {self.kind!r}")
        if self.block_index < 0:
            raise FormatError(f"negative block index {self.block_index}")

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.data.shape[0], self.data.shape[1]


def _meta_path(path: Path) -> Path:
    return path.with_name(path.stem + ".meta.json")


def map_path(maps_dir: str | Path, model_id: str, stimulus_id: str,
             block_index: int, kind: str) -> Path:
    """Canonical location for one map file inside a run directory."""
    return Path(maps_dir) / model_id / stimulus_id / f"block{block_index}_{kind}.npy"


def write_map(stack: MapStack, path: str | Path) -> None:
    """Write a map stack plus its sidecar metadata; round-trips bitwise."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_npy(path, stack.data)
    meta = {
        "kind": stack.kind,
        "block_index": stack.block_index,
        "model_id": stack.model_id,
        "stimulus_id": stack.stimulus_id,
    }
    _meta_path(path).write_text(json.dumps(meta, indent=1))


def read_map(path: str | Path) -> MapStack:
    """Read one map file; rejects wrong dtype, wrong rank, or non-finite data."""
    path = Path(path)
    data = read_npy(path)
    if data.ndim != 3:
        raise FormatError(f"{path}: expected rank-3 [H, W, C], got shape {data.shape}")
    if not np.all(np.isfinite(data)):
        raise NumericError(f"{path}: map contains non-finite values")
    meta_file = _meta_path(path)
    if meta_file.exists():
        meta = json.loads(meta_file.read_text())
    else:
        # tolerate foreign producers that skip the sidecar
        meta = {"kind": "attn_out", "block_index": 0, "model_id": "unknown",
                "stimulus_id": path.parent.name}
    return MapStack(
        data=data,
        kind=meta["kind"],
        block_index=int(meta["block_index"]),
        model_id=str(meta["model_id"]),
        stimulus_id=str(meta["stimulus_id"]),
    )


# -- run manifests --------------------------------------------------------

@dataclass
class RunManifest:
    """Index of every map a model run produced, with per-block grid dims."""

    model_id: str
    num_blocks: int
    grids: list[list[int]]          # [h, w] per block
    kinds: list[str]
    stimuli: list[dict] = field(default_factory=list)
    dataset_manifest: str | None = None
    config: dict = field(default_factory=dict)

    def map_file(self, stimulus_id: str, block_index: int, kind: str) -> str:
        for rec in self.stimuli:
            if rec["stimulus_id"] == stimulus_id:
                return rec["maps"][f"block{block_index}_{kind}"]
        raise KeyError(stimulus_id)


def write_manifest(manifest: RunManifest, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "model_id": manifest.model_id,
        "num_blocks": manifest.num_blocks,
        "grids": manifest.grids,
        "kinds": manifest.kinds,
        "dataset_manifest": manifest.dataset_manifest,
        "config": manifest.config,
        "stimuli": manifest.stimuli,
    }
    path.write_text(json.dumps(doc, indent=1, sort_keys=True))


def read_manifest(path: str | Path, check_files: bool = True) -> RunManifest:
    """Load a run manifest and (by default) verify every referenced map exists."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise IntegrityError(f"{path}: cannot read manifest: {e}") from e
    manifest = RunManifest(
        model_id=doc["model_id"],
        num_blocks=int(doc["num_blocks"]),
        grids=[[int(a), int(b)] for a, b in doc["grids"]],
        kinds=list(doc["kinds"]),
        stimuli=list(doc["stimuli"]),
        dataset_manifest=doc.get("dataset_manifest"),
        config=doc.get("config", {}),
    )
    if manifest.num_blocks < 1:
        raise IntegrityError(f"{path}: num_blocks must be >= 1")
    if len(manifest.grids) != manifest.num_blocks:
        raise IntegrityError(f"{path}: grids/num_blocks mismatch")
    if check_files:
        root = path.parent
        missing = []
        for rec in manifest.stimuli:
            for rel in rec["maps"].values():
                if not (root / rel).exists():
                    missing.append(str(root / rel))
        if missing:
            raise IntegrityError(
                "manifest references missing files:\n  " + "\n  ".join(missing)
            )
    return manifest


# -- weight file sets -----------------------------------------------------

def save_tensors(tensors: dict[str, np.ndarray], out_dir: str | Path) -> Path:
    """Write a named tensor set: one NPY per tensor plus an index JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = {}
    for name, arr in tensors.items():
        fname = name.replace("/", "_") + ".npy"
        write_npy(out_dir / fname, np.asarray(arr, dtype=np.float32))
        index[name] = {"file": fname, "shape": list(np.asarray(arr).shape)}
    index_path = out_dir / "index.json"
    index_path.write_text(json.dumps(index, indent=1, sort_keys=True))
    return index_path


def load_tensors(index_path: str | Path) -> dict[str, np.ndarray]:
    """Load a tensor set written by save_tensors, validating shapes."""
    index_path = Path(index_path)
    index = json.loads(index_path.read_text())
    out = {}
    for name, entry in index.items():
        arr = read_npy(index_path.parent / entry["file"])
        if list(arr.shape) != list(entry["shape"]):
            raise IntegrityError(
                f"tensor {name}: index says shape {entry['shape']}, "
                f"file has {list(arr.shape)}"
            )
        out[name] = arr
    return out
