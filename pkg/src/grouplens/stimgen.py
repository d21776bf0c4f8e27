"""Procedural grouping and singleton (pop-out) stimuli with exact label masks.

Grouping stimuli: four rows of figures on a mid-gray background, two
perceptual groups alternating row-wise (A, B, A, B), differing in exactly one
feature dimension. Three geometry versions exist: figures inside single
16 px token cells (v16), 32 px figures centered on every other token center
(v32), and a token-agnostic centered grid of 37 px figures (v37).

Singleton stimuli: a 7 x 7 grid of identical distractors plus one target that
differs in color, orientation, or size.

Every stimulus is a pure function of its fully-resolved spec; all random
choices happen when a dataset generator draws the spec. Per-stimulus seeds
come from a SplitMix64-style mix of (global seed, dimension index, stimulus
index), so datasets regenerate identically anywhere.
"""

from __future__ import annotations

import colorsys
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IntegrityError, LayoutError, SpecError
from .shapes import SHAPES, figure_bbox, rasterize_figure

GROUPING_DIMS = ("hue", "saturation", "lightness", "shape", "orientation", "size")
SINGLETON_DIMS = ("color", "orientation", "size")
VERSIONS = ("v16", "v32", "v37")

BACKGROUND_RGB = (128, 128, 128)
BACKGROUND_LIGHTNESS = 128 / 255
BASE_HSL = (0.0, 0.8, 0.5)  # saturated red for all non-color dimensions

# minimum separations between the two group values, per dimension
MIN_SEP = {
    "hue": 60.0,          # degrees, circular on 360
    "saturation": 0.3,
    "lightness": 0.3,     # plus >= 0.15 from the background lightness
    "orientation": 30.0,  # degrees, circular on 180
    "size": 1.5,          # ratio of larger to smaller
    "color": 60.0,        # singleton hue separation
}
LIGHTNESS_BG_MARGIN = 0.15

# 3:1 bar circumdiameter relative to its long side; oriented figures are
# sized so they stay inside their cell at any angle
_BAR_CIRCUM = math.sqrt(1 + (1 / 3) ** 2)

CANVAS_GROUPING = 224
CANVAS_SINGLETON = 1024
TOKEN_PX = 16
SINGLETON_GRID = 7
SINGLETON_BASE_SIZE = 48.0


def hsl_to_rgb8(hue_deg: float, saturation: float, lightness: float) -> tuple[int, int, int]:
    """Standard HSL -> 8-bit sRGB."""
    r, g, b = colorsys.hls_to_rgb((hue_deg % 360.0) / 360.0, lightness, saturation)
    return (int(round(r * 255)), int(round(g * 255)), int(round(b * 255)))


def circular_sep(a: float, b: float, period: float) -> float:
    d = abs(a - b) % period
    return min(d, period - d)


def derive_seed(global_seed: int, dim_index: int, stim_index: int) -> int:
    """SplitMix64-style per-stimulus seed; documented counter scheme."""
    x = (int(global_seed) + 0x9E3779B97F4A7C15 * (dim_index * 1_000_003 + stim_index + 1)) % 2**64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) % 2**64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) % 2**64
    return x ^ (x >> 31)


# -- specs ------------------------------------------------------------------

@dataclass
class GroupingSpec:
    feature_dim: str
    version: str
    group_a_value: object
    group_b_value: object
    seed: int = 0
    rows: int = 4
    figures_per_row: int | None = None  # None -> version default
    canvas: int = CANVAS_GROUPING

    def resolved_figures_per_row(self) -> int:
        if self.figures_per_row is not None:
            return self.figures_per_row
        # v32 and v37 hold fewer figures per row: 7 of the larger figures
        # cannot stay inside a 224 px canvas at their fixed positions
        return {"v16": 7, "v32": 6, "v37": 5}[self.version]

    def cell_size(self) -> float:
        return {"v16": 16.0, "v32": 32.0, "v37": 37.0}[self.version]

    def base_figure_size(self) -> float:
        # v32 centers sit exactly one cell apart, so full-size figures would
        # touch; 30 px still fits the 32 px bound and keeps figures disjoint
        return {"v16": 16.0, "v32": 30.0, "v37": 37.0}[self.version]

    def validate(self) -> None:
        if self.feature_dim not in GROUPING_DIMS:
            raise SpecError(f"unknown feature dimension {self.feature_dim!r}")
        if self.version not in VERSIONS:
            raise SpecError(f"unknown version {self.version!r}")
        if self.rows != 4:
            raise SpecError("grouping stimuli use exactly 4 rows")
        a, b = self.group_a_value, self.group_b_value
        if a == b:
            raise SpecError(f"group values must differ, both are {a!r}")
        dim = self.feature_dim
        if dim == "hue":
            if circular_sep(float(a), float(b), 360.0) < MIN_SEP["hue"]:
                raise SpecError(f"hue separation below {MIN_SEP['hue']} deg: {a}, {b}")
        elif dim == "saturation":
            if not (0 <= float(a) <= 1 and 0 <= float(b) <= 1):
                raise SpecError("saturation values must lie in [0, 1]")
            if abs(float(a) - float(b)) < MIN_SEP["saturation"]:
                raise SpecError(f"saturation separation below {MIN_SEP['saturation']}")
        elif dim == "lightness":
            if not (0 <= float(a) <= 1 and 0 <= float(b) <= 1):
                raise SpecError("lightness values must lie in [0, 1]")
            if abs(float(a) - float(b)) < MIN_SEP["lightness"]:
                raise SpecError(f"lightness separation below {MIN_SEP['lightness']}")
            for v in (a, b):
                if abs(float(v) - BACKGROUND_LIGHTNESS) < LIGHTNESS_BG_MARGIN:
                    raise SpecError(
                        f"lightness {v} within {LIGHTNESS_BG_MARGIN} of the background"
                    )
        elif dim == "orientation":
            if circular_sep(float(a), float(b), 180.0) < MIN_SEP["orientation"]:
                raise SpecError(f"orientation separation below {MIN_SEP['orientation']} deg")
        elif dim == "size":
            lo, hi = sorted((float(a), float(b)))
            if lo <= 0:
                raise SpecError("sizes must be positive")
            if hi / lo < MIN_SEP["size"]:
                raise SpecError(f"size ratio below {MIN_SEP['size']}: {a}, {b}")
            if hi > self.cell_size():
                raise LayoutError(
                    f"figure size {hi} exceeds the {self.cell_size()} px cell of {self.version}"
                )
        elif dim == "shape":
            for v in (a, b):
                if v not in SHAPES:
                    raise SpecError(f"unknown shape {v!r}")


@dataclass
class SingletonSpec:
    feature_dim: str
    target_cell: tuple[int, int]
    target_value: object
    distractor_value: object
    seed: int = 0
    base_size: float = SINGLETON_BASE_SIZE
    canvas: int = CANVAS_SINGLETON
    grid: int = SINGLETON_GRID

    def validate(self) -> None:
        if self.feature_dim not in SINGLETON_DIMS:
            raise SpecError(f"unknown singleton dimension {self.feature_dim!r}")
        r, c = self.target_cell
        if not (0 <= r < self.grid and 0 <= c < self.grid):
            raise SpecError(f"target cell {self.target_cell} outside {self.grid}x{self.grid} grid")
        a, b = self.target_value, self.distractor_value
        if a == b:
            raise SpecError("target and distractor values must differ")
        if self.feature_dim == "color":
            if circular_sep(float(a), float(b), 360.0) < MIN_SEP["color"]:
                raise SpecError(f"hue separation below {MIN_SEP['color']} deg")
        elif self.feature_dim == "orientation":
            if circular_sep(float(a), float(b), 180.0) < MIN_SEP["orientation"]:
                raise SpecError(f"orientation separation below {MIN_SEP['orientation']} deg")
        elif self.feature_dim == "size":
            lo, hi = sorted((float(a), float(b)))
            if lo <= 0:
                raise SpecError("sizes must be positive")
            if hi / lo < MIN_SEP["size"]:
                raise SpecError(f"size ratio below {MIN_SEP['size']}")
            if hi > self.canvas / self.grid:
                raise LayoutError(f"size {hi} exceeds the grid cell")


@dataclass
class Stimulus:
    image: np.ndarray    # H x W x 3 uint8
    labels: np.ndarray   # H x W uint8, 0=background 1=group1/target 2=group2/distractor
    meta: dict


# -- figure parameter resolution ---------------------------------------------

@dataclass
class _Figure:
    shape: str
    size: float
    orientation: float
    color: tuple[int, int, int]


def _grouping_figures(spec: GroupingSpec) -> tuple[_Figure, _Figure]:
    """Resolve the concrete appearance of group A and group B figures."""
    cell = spec.base_figure_size()
    base_color = hsl_to_rgb8(*BASE_HSL)
    dim = spec.feature_dim
    a, b = spec.group_a_value, spec.group_b_value
    if dim == "hue":
        return (
            _Figure("square", cell, 0.0, hsl_to_rgb8(float(a), BASE_HSL[1], BASE_HSL[2])),
            _Figure("square", cell, 0.0, hsl_to_rgb8(float(b), BASE_HSL[1], BASE_HSL[2])),
        )
    if dim == "saturation":
        return (
            _Figure("square", cell, 0.0, hsl_to_rgb8(BASE_HSL[0], float(a), BASE_HSL[2])),
            _Figure("square", cell, 0.0, hsl_to_rgb8(BASE_HSL[0], float(b), BASE_HSL[2])),
        )
    if dim == "lightness":
        return (
            _Figure("square", cell, 0.0, hsl_to_rgb8(BASE_HSL[0], BASE_HSL[1], float(a))),
            _Figure("square", cell, 0.0, hsl_to_rgb8(BASE_HSL[0], BASE_HSL[1], float(b))),
        )
    if dim == "shape":
        return (
            _Figure(str(a), cell, 0.0, base_color),
            _Figure(str(b), cell, 0.0, base_color),
        )
    if dim == "orientation":
        size = math.floor(cell / _BAR_CIRCUM)  # stays inside the cell at any angle
        return (
            _Figure("rectangle", size, float(a), base_color),
            _Figure("rectangle", size, float(b), base_color),
        )
    if dim == "size":
        return (
            _Figure("square", float(a), 0.0, base_color),
            _Figure("square", float(b), 0.0, base_color),
        )
    raise SpecError(dim)


def _grouping_centers(spec: GroupingSpec) -> list[list[tuple[float, float]]]:
    """Figure centers per row, honoring the version geometry."""
    n = spec.resolved_figures_per_row()
    if spec.version in ("v16", "v32"):
        tokens = spec.canvas // TOKEN_PX
        col_span = 2 * n - 1
        row_span = 2 * spec.rows - 1
        if spec.version == "v32":
            # 32 px figures need a full token of margin at the borders
            usable = tokens - 2
            if col_span > usable or row_span > usable:
                raise LayoutError(f"{n} figures per row do not fit {spec.version}")
            col0, row0 = 1 + (usable - col_span) // 2, 1 + (usable - row_span) // 2
        else:
            if col_span > tokens or row_span > tokens:
                raise LayoutError(f"{n} figures per row do not fit {spec.version}")
            col0, row0 = (tokens - col_span) // 2, (tokens - row_span) // 2
        return [
            [
                (TOKEN_PX * (col0 + 2 * c) + TOKEN_PX / 2, TOKEN_PX * (row0 + 2 * r) + TOKEN_PX / 2)
                for c in range(n)
            ]
            for r in range(spec.rows)
        ]
    # v37: token-agnostic centered grid with 5 px gaps
    cell, gap = spec.cell_size(), 5.0
    grid_w = n * cell + (n - 1) * gap
    grid_h = spec.rows * cell + (spec.rows - 1) * gap
    if grid_w > spec.canvas or grid_h > spec.canvas:
        raise LayoutError(f"{n} figures per row do not fit {spec.version}")
    x0 = (spec.canvas - grid_w) / 2 + cell / 2
    y0 = (spec.canvas - grid_h) / 2 + cell / 2
    return [
        [(x0 + c * (cell + gap), y0 + r * (cell + gap)) for c in range(n)]
        for r in range(spec.rows)
    ]


# -- rendering ----------------------------------------------------------------

def _blank_canvas(side: int) -> tuple[np.ndarray, np.ndarray]:
    image = np.empty((side, side, 3), dtype=np.uint8)
    image[:] = BACKGROUND_RGB
    labels = np.zeros((side, side), dtype=np.uint8)
    return image, labels


def gen_grouping_stimulus(spec: GroupingSpec) -> Stimulus:
    """Render one grouping stimulus; deterministic in the spec."""
    spec.validate()
    fig_a, fig_b = _grouping_figures(spec)
    centers = _grouping_centers(spec)

    if spec.version == "v37":
        # recenter so the union bounding box of the actual figures sits on
        # the image center even when the two groups have different sizes
        boxes = [
            figure_bbox(f.shape, f.size, f.orientation, ctr)
            for r, row in enumerate(centers)
            for ctr, f in ((c, fig_a if r % 2 == 0 else fig_b) for c in row)
        ]
        x0 = min(b[0] for b in boxes); y0 = min(b[1] for b in boxes)
        x1 = max(b[2] for b in boxes); y1 = max(b[3] for b in boxes)
        dx = spec.canvas / 2 - (x0 + x1) / 2
        dy = spec.canvas / 2 - (y0 + y1) / 2
        centers = [[(x + dx, y + dy) for x, y in row] for row in centers]

    image, labels = _blank_canvas(spec.canvas)
    for r, row in enumerate(centers):
        figure = fig_a if r % 2 == 0 else fig_b
        label = 1 if r % 2 == 0 else 2
        for center in row:
            mask = rasterize_figure(
                figure.shape, figure.size, figure.orientation, figure.color, center, image
            )
            labels[mask] = label
    return Stimulus(
        image=image, labels=labels,
        meta={
            "kind": "grouping",
            "spec": asdict(spec),
            # resolved appearance: shared base plus the varied dimension
            "figures": {"group1": asdict(fig_a), "group2": asdict(fig_b)},
        },
    )


def gen_p3_stimulus(spec: SingletonSpec) -> Stimulus:
    """Render one singleton stimulus; deterministic in the spec."""
    spec.validate()
    pitch = spec.canvas / spec.grid
    base_color = hsl_to_rgb8(*BASE_HSL)

    def cell_figure(is_target: bool) -> _Figure:
        value = spec.target_value if is_target else spec.distractor_value
        if spec.feature_dim == "color":
            return _Figure("square", spec.base_size, 0.0,
                           hsl_to_rgb8(float(value), BASE_HSL[1], BASE_HSL[2]))
        if spec.feature_dim == "orientation":
            return _Figure("rectangle", spec.base_size, float(value), base_color)
        return _Figure("square", float(value), 0.0, base_color)

    image, labels = _blank_canvas(spec.canvas)
    for r in range(spec.grid):
        for c in range(spec.grid):
            is_target = (r, c) == tuple(spec.target_cell)
            figure = cell_figure(is_target)
            center = ((c + 0.5) * pitch, (r + 0.5) * pitch)
            mask = rasterize_figure(
                figure.shape, figure.size, figure.orientation, figure.color, center, image
            )
            labels[mask] = 1 if is_target else 2
    return Stimulus(image=image, labels=labels, meta={"kind": "singleton", "spec": asdict(spec)})


# -- random spec drawing --------------------------------------------------------

def draw_grouping_spec(feature_dim: str, version: str, seed: int,
                       figures_per_row: int | None = None) -> GroupingSpec:
    """Draw random group values for one stimulus from its derived seed."""
    rng = np.random.default_rng(seed)
    cell = {"v16": 16.0, "v32": 30.0, "v37": 37.0}[version]
    if feature_dim == "hue":
        a = rng.uniform(0, 360)
        b = (a + rng.uniform(MIN_SEP["hue"], 360 - MIN_SEP["hue"])) % 360
    elif feature_dim == "saturation":
        while True:
            a, b = rng.uniform(0, 1, 2)
            if abs(a - b) >= MIN_SEP["saturation"]:
                break
    elif feature_dim == "lightness":
        while True:
            a, b = rng.uniform(0.05, 0.95, 2)
            if (abs(a - b) >= MIN_SEP["lightness"]
                    and abs(a - BACKGROUND_LIGHTNESS) >= LIGHTNESS_BG_MARGIN
                    and abs(b - BACKGROUND_LIGHTNESS) >= LIGHTNESS_BG_MARGIN):
                break
    elif feature_dim == "shape":
        a, b = rng.choice(len(SHAPES), size=2, replace=False)
        a, b = SHAPES[a], SHAPES[b]
    elif feature_dim == "orientation":
        a = rng.uniform(0, 180)
        b = (a + rng.uniform(MIN_SEP["orientation"], 180 - MIN_SEP["orientation"])) % 180
    elif feature_dim == "size":
        # integer sizes rasterize to exact s*s squares, keeping area ratios
        # faithful even for token-sized figures
        lo = max(6, round(cell / 4))
        big = int(rng.integers(math.ceil(lo * MIN_SEP["size"]), int(cell) + 1))
        small = int(rng.integers(lo, int(big / MIN_SEP["size"]) + 1))
        a, b = (big, small) if rng.random() < 0.5 else (small, big)
    else:
        raise SpecError(f"unknown feature dimension {feature_dim!r}")
    return GroupingSpec(
        feature_dim=feature_dim, version=version,
        group_a_value=a if isinstance(a, str) else float(a),
        group_b_value=b if isinstance(b, str) else float(b),
        seed=seed, figures_per_row=figures_per_row,
    )


def draw_singleton_spec(feature_dim: str, seed: int) -> SingletonSpec:
    rng = np.random.default_rng(seed)
    target_cell = (int(rng.integers(SINGLETON_GRID)), int(rng.integers(SINGLETON_GRID)))
    if feature_dim == "color":
        d = rng.uniform(0, 360)
        t = (d + rng.uniform(MIN_SEP["color"], 360 - MIN_SEP["color"])) % 360
    elif feature_dim == "orientation":
        d = rng.uniform(0, 180)
        t = (d + rng.uniform(MIN_SEP["orientation"], 180 - MIN_SEP["orientation"])) % 180
    elif feature_dim == "size":
        d = SINGLETON_BASE_SIZE
        ratio = rng.uniform(MIN_SEP["size"], 2.0)
        t = round(d * ratio) if rng.random() < 0.5 else round(d / ratio)
    else:
        raise SpecError(f"unknown singleton dimension {feature_dim!r}")
    return SingletonSpec(
        feature_dim=feature_dim, target_cell=target_cell,
        target_value=float(t), distractor_value=float(d), seed=seed,
    )


# -- dataset generation and manifests -------------------------------------------

@dataclass
class DatasetManifest:
    dataset_id: str
    version: str
    seed: int
    records: list[dict] = field(default_factory=list)

    @property
    def path(self) -> Path | None:
        return getattr(self, "_path", None)


def save_image_png(path: Path, array: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "RGB" if array.ndim == 3 else "L"
    Image.fromarray(array, mode=mode).save(path, format="PNG")


def load_image_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im)


def _write_dataset(out_dir: Path, dataset_id: str, version: str, seed: int,
                   stimuli: list[tuple[str, str, Stimulus]]) -> DatasetManifest:
    manifest_path = out_dir / "manifest.json"
    if manifest_path.exists():
        existing = json.loads(manifest_path.read_text())
        raise IntegrityError(
            f"{out_dir} already holds dataset {existing.get('dataset_id')!r}"
        )
    records = []
    for stim_id, dim, stim in stimuli:
        rel_img = f"{version}/{dim}/{stim_id}.png"
        rel_mask = f"{version}/{dim}/{stim_id}.labels.png"
        save_image_png(out_dir / rel_img, stim.image)
        save_image_png(out_dir / rel_mask, stim.labels)
        records.append({
            "id": stim_id,
            "image_path": rel_img,
            "mask_path": rel_mask,
            "feature_dim": dim,
            "spec": stim.meta["spec"],
        })
    manifest = DatasetManifest(dataset_id=dataset_id, version=version, seed=seed,
                               records=records)
    manifest_path.write_text(json.dumps(asdict(manifest), indent=1, sort_keys=True))
    manifest._path = manifest_path
    return manifest


def gen_grouping_dataset(version: str, count_per_dim: int, seed: int,
                         out_dir: str | Path,
                         figures_per_row: int | None = None) -> DatasetManifest:
    """Render count_per_dim stimuli for each of the six feature dimensions."""
    if version not in VERSIONS:
        raise SpecError(f"unknown version {version!r}")
    if count_per_dim < 1:
        raise SpecError("count_per_dim must be >= 1")
    out_dir = Path(out_dir)
    stimuli = []
    for d, dim in enumerate(GROUPING_DIMS):
        for i in range(count_per_dim):
            spec = draw_grouping_spec(dim, version, derive_seed(seed, d, i),
                                      figures_per_row=figures_per_row)
            stimuli.append((f"{version}-{dim}-{i:04d}", dim, gen_grouping_stimulus(spec)))
    return _write_dataset(out_dir, f"grouping-{version}-seed{seed}", version, seed, stimuli)


def gen_p3_dataset(count: int, seed: int, out_dir: str | Path) -> DatasetManifest:
    """Render `count` singleton stimuli split evenly over the three dimensions."""
    if count < 1:
        raise SpecError("count must be >= 1")
    out_dir = Path(out_dir)
    stimuli = []
    for d, dim in enumerate(SINGLETON_DIMS):
        n = count // len(SINGLETON_DIMS) + (1 if d < count % len(SINGLETON_DIMS) else 0)
        for i in range(n):
            spec = draw_singleton_spec(dim, derive_seed(seed, d, i))
            stimuli.append((f"p3-{dim}-{i:04d}", dim, gen_p3_stimulus(spec)))
    return _write_dataset(out_dir, f"p3-seed{seed}", "p3", seed, stimuli)


def read_dataset_manifest(path: str | Path, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise IntegrityError(f"{path}: cannot read dataset manifest: {e}") from e
    manifest = DatasetManifest(
        dataset_id=doc["dataset_id"], version=doc["version"],
        seed=int(doc["seed"]), records=list(doc["records"]),
    )
    manifest._path = path
    if check_files:
        missing = []
        for rec in manifest.records:
            for key in ("image_path", "mask_path"):
                if rec.get(key) and not (path.parent / rec[key]).exists():
                    missing.append(str(path.parent / rec[key]))
        if missing:
            raise IntegrityError(
                "dataset manifest references missing files:\n  " + "\n  ".join(missing)
            )
    return manifest
