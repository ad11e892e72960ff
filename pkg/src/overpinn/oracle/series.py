"""Gridded field containers and their on-disk format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SERIES_MAGIC = "overpinn-series"
SERIES_VERSION = 1


class SeriesFormatError(ValueError):
    pass


@dataclass
class Grid2D:
    """Periodic field on (0, 2pi)^2; ``values[i, j]`` sits at ``(x_i, y_j)``."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("Grid2D values must be 2-D")

    @property
    def resolution(self) -> tuple[int, int]:
        return self.values.shape

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        nx, ny = self.values.shape
        return 2 * np.pi * np.arange(nx) / nx, 2 * np.pi * np.arange(ny) / ny


@dataclass
class FieldSeries:
    """Frames of one scalar variable at increasing times.

    ``frames`` has shape ``(F, n)`` for line data or ``(F, nx, ny)`` for
    planar data.  ``coords`` holds the grid coordinates along each spatial
    axis.
    """

    name: str
    times: np.ndarray
    frames: np.ndarray
    coords: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.coords = [np.asarray(c, dtype=np.float64) for c in self.coords]
        if self.frames.shape[0] != self.times.size:
            raise ValueError("frames and times differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be increasing")
        if len(self.coords) != self.frames.ndim - 1 or \
                any(c.size != n for c, n in zip(self.coords, self.frames.shape[1:])):
            raise ValueError("coordinates do not match the frame shape")

    def __len__(self) -> int:
        return self.times.size

    @property
    def shape(self) -> tuple:
        return self.frames.shape[1:]

    def frame_at(self, t: float, atol: float = 1e-9) -> np.ndarray:
        i = np.flatnonzero(np.abs(self.times - t) <= atol)
        if i.size == 0:
            raise KeyError(f"no frame at t={t}")
        return self.frames[i[0]]

    def points(self) -> np.ndarray:
        """All (t, *x) sample locations in frame order, shape (F * prod(shape), 1 + ndim)."""
        mesh = np.meshgrid(self.times, *self.coords, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def save(self, path) -> None:
        header = {
            "format": SERIES_MAGIC, "version": SERIES_VERSION, "name": self.name,
            "times": self.times.tolist(), "shape": list(self.shape),
            "coords": [c.tolist() for c in self.coords], "metadata": self.metadata,
        }
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            fh.write(self.frames.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> FieldSeries:
        raw = Path(path).read_bytes()
        nl = raw.find(b"\n")
        try:
            header = json.loads(raw[:nl].decode()) if nl >= 0 else None
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise SeriesFormatError(f"corrupted series header: {exc}") from exc
        if not isinstance(header, dict) or header.get("format") != SERIES_MAGIC:
            raise SeriesFormatError("not a field series file")
        if header.get("version") != SERIES_VERSION:
            raise SeriesFormatError(f"unsupported series version {header.get('version')}")
        shape = (len(header["times"]),) + tuple(header["shape"])
        blob = raw[nl + 1:]
        if len(blob) != 8 * int(np.prod(shape)):
            raise SeriesFormatError("truncated series data")
        frames = np.frombuffer(blob, dtype="<f8").reshape(shape)
        return cls(header["name"], header["times"], frames, header["coords"], header["metadata"])


def downsample(series: FieldSeries, factor: int) -> FieldSeries:
    """Keep every ``factor``-th grid point along each spatial axis."""
    if factor < 1 or any(n % factor for n in series.shape):
        raise ValueError(f"factor {factor} does not divide resolution {series.shape}")
    sl = (slice(None),) + (slice(None, None, factor),) * len(series.shape)
    meta = dict(series.metadata, downsample=factor * series.metadata.get("downsample", 1))
    return FieldSeries(series.name, series.times.copy(), series.frames[sl].copy(),
                       [c[::factor] for c in series.coords], meta)
