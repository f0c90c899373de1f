"""Dataset ingestion, contamination injection, and flat-file output formats."""

import csv
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataValidationError, ParseError

IDX_IMAGE_MAGIC = 0x00000803
SAMPLE_MAGIC = b"RRKMDAT1"


@dataclass(frozen=True)
class DatasetHandle:
    """N x d matrix in [0, 1] with provenance and optional labels.

    feature_min/feature_max hold the pre-normalization column ranges when the
    loader rescaled, so outputs can be mapped back to the original units.
    """

    rows: np.ndarray
    source: str
    labels: np.ndarray | None = None
    feature_min: np.ndarray | None = None
    feature_max: np.ndarray | None = None

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if not np.all(np.isfinite(rows)):
            raise DataValidationError("data_io.DatasetHandle: non-finite entries")
        if rows.size and (rows.min() < 0.0 or rows.max() > 1.0):
            raise DataValidationError(
                "data_io.DatasetHandle: entries outside [0, 1]; load with normalize=True"
            )
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    def denormalize(self, rows: np.ndarray) -> np.ndarray:
        """Map [0,1]-scaled rows back to the original units."""
        if self.feature_min is None or self.feature_max is None:
            return np.asarray(rows, dtype=float)
        span = self.feature_max - self.feature_min
        return np.asarray(rows, dtype=float) * span + self.feature_min


def load_csv(path, normalize: bool = False) -> DatasetHandle:
    """Read a rectangular numeric CSV (optional single header row).

    With normalize=True each column is rescaled to [0, 1] by its (min, max);
    a constant column maps to 0 with a warning. Malformed cells raise
    ParseError carrying the 1-based row/column.
    """
    path = Path(path)
    raw_rows: list[list[float]] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        width = None
        for r, record in enumerate(reader, start=1):
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            values = []
            for c, cell in enumerate(record, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    if r == 1 and not raw_rows:
                        values = None  # header row
                        break
                    raise ParseError(
                        f"data_io.load_csv: non-numeric cell {cell!r}", row=r, col=c
                    ) from None
                if not np.isfinite(v):
                    raise ParseError("data_io.load_csv: non-finite cell", row=r, col=c)
                values.append(v)
            if values is None:
                continue
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ParseError(
                    f"data_io.load_csv: ragged row ({len(values)} cells, expected {width})",
                    row=r,
                )
            raw_rows.append(values)
    if not raw_rows:
        raise ParseError("data_io.load_csv: no data rows")
    data = np.asarray(raw_rows, dtype=float)
    fmin = fmax = None
    if normalize:
        fmin = data.min(axis=0)
        fmax = data.max(axis=0)
        span = fmax - fmin
        constant = span == 0.0
        if constant.any():
            warnings.warn(
                f"data_io.load_csv: {int(constant.sum())} constant column(s) mapped to 0"
            )
        safe = np.where(constant, 1.0, span)
        data = (data - fmin) / safe
        data[:, constant] = 0.0
    return DatasetHandle(
        rows=data, source=str(path), feature_min=fmin, feature_max=fmax
    )


def load_idx(images_path, limit: int | None = None) -> DatasetHandle:
    """Read a u8 image container (magic 0x00000803, big-endian dims) and
    return the first `limit` images flattened row-major, scaled by 1/255."""
    path = Path(images_path)
    blob = path.read_bytes()
    if len(blob) < 16:
        raise ParseError("data_io.load_idx: file too short for an image header")
    magic, count, rows, cols = struct.unpack(">IIII", blob[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise ParseError(
            f"data_io.load_idx: bad magic 0x{magic:08x}, expected image magic "
            f"0x{IDX_IMAGE_MAGIC:08x}"
        )
    if limit is None:
        limit = count
    if limit > count:
        warnings.warn(
            f"data_io.load_idx: limit {limit} exceeds stored count {count}; clamping"
        )
        limit = count
    need = limit * rows * cols
    payload = blob[16 : 16 + need]
    if len(payload) < need:
        raise ParseError(
            f"data_io.load_idx: truncated payload ({len(payload)} of {need} bytes)"
        )
    data = np.frombuffer(payload, dtype=np.uint8).astype(float) / 255.0
    return DatasetHandle(rows=data.reshape(limit, rows * cols), source=str(path))


def save_idx(path, images: np.ndarray, side: tuple[int, int] | None = None):
    """Write images (rows in [0,1]) as a u8 image container; inverse of load_idx."""
    images = np.atleast_2d(np.asarray(images, dtype=float))
    n, d = images.shape
    if side is None:
        edge = int(round(np.sqrt(d)))
        if edge * edge != d:
            raise DataValidationError("data_io.save_idx: pass side= for non-square images")
        side = (edge, edge)
    payload = np.clip(np.rint(images * 255.0), 0, 255).astype(np.uint8).tobytes()
    with Path(path).open("wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, side[0], side[1]))
        fh.write(payload)


def contaminate(
    data: DatasetHandle,
    fraction: float,
    noise_mean: float = 0.5,
    noise_sd: float = 0.5,
    seed: int = 0,
) -> tuple[DatasetHandle, np.ndarray]:
    """Add elementwise Gaussian noise to a random floor(fraction*N) subset,
    clipping back into [0, 1]. Returns the new handle and the ground-truth
    outlier indices (sorted)."""
    if not 0.0 <= fraction <= 1.0:
        raise DataValidationError("data_io.contaminate: fraction must lie in [0, 1]")
    if noise_sd < 0:
        raise DataValidationError("data_io.contaminate: noise_sd must be >= 0")
    rng = np.random.default_rng(seed)
    n = data.n
    k = int(np.floor(fraction * n))
    idx = np.sort(rng.choice(n, size=k, replace=False))
    rows = data.rows.copy()
    if k:
        noise = noise_mean + noise_sd * rng.standard_normal((k, rows.shape[1]))
        rows[idx] = np.clip(rows[idx] + noise, 0.0, 1.0)
    handle = DatasetHandle(
        rows=rows,
        source=f"{data.source}+noise({noise_mean},{noise_sd},{fraction})",
        labels=data.labels,
        feature_min=data.feature_min,
        feature_max=data.feature_max,
    )
    return handle, idx


def save_samples(path, rows: np.ndarray):
    """Write a sample matrix in the raw binary container: 8-byte magic
    "RRKMDAT1", u32 rows, u32 cols (little-endian), then f32 row-major data."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float32))
    with Path(path).open("wb") as fh:
        fh.write(SAMPLE_MAGIC)
        fh.write(struct.pack("<II", rows.shape[0], rows.shape[1]))
        fh.write(rows.astype("<f4").tobytes(order="C"))


def load_samples(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:8] != SAMPLE_MAGIC:
        raise ParseError("data_io.load_samples: bad magic")
    n, d = struct.unpack("<II", blob[8:16])
    need = n * d * 4
    if len(blob) < 16 + need:
        raise ParseError("data_io.load_samples: truncated payload")
    return np.frombuffer(blob[16 : 16 + need], dtype="<f4").reshape(n, d).astype(float)


def write_matrix_csv(path, rows: np.ndarray):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerows(rows.tolist())


def write_weights_csv(path, weights) -> None:
    """CSV of (index, squared distance, weight, threshold) for inspection."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "distance_sq", "weight", "threshold"])
        for i, (d, w) in enumerate(zip(weights.distances_sq, weights.weights)):
            writer.writerow([i, repr(float(d)), repr(float(w)), repr(float(weights.threshold))])


def write_histogram_csv(path, diagnostics) -> None:
    """CSV of (dim, bin_left, count) per latent dimension."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dim", "bin_left", "count"])
        s, bins = diagnostics.hist_counts.shape
        for j in range(s):
            for b in range(bins):
                writer.writerow(
                    [j, repr(float(diagnostics.hist_edges[j, b])),
                     int(diagnostics.hist_counts[j, b])]
                )


def write_report_csv(path, report) -> None:
    """Per-epoch loss aggregates of a TrainReport as CSV."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "j_t", "stab", "recon", "total"])
        for e, loss in enumerate(report.epoch_losses):
            writer.writerow(
                [e, repr(loss.j_t), repr(loss.stab), repr(loss.recon), repr(loss.total)]
            )
