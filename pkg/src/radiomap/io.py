"""Plain-text file formats: measurement CSVs with metadata sidecars,
quantized grids and traditional estimator parameters."""

from __future__ import annotations

import configparser
import csv
from pathlib import Path

import numpy as np

from .core import MeasurementSet, QuantizedGrid, grid_point_location
from .estimators.traditional import Kernel, KnnParams, KrigingParams, KrrParams

DATASET_HEADER = ["x_m", "y_m", "power_db"]
SIDECAR_SECTION = "measurement_set"
SIDECAR_KEYS = ("region_x_m", "region_y_m", "wavelength_m", "grid_spacing_m")


def fmt_db(v) -> str:
    """dB values are written with 6 significant digits."""
    return f"{float(v):.6g}"


def fmt_num(v) -> str:
    # Shortest round-trip repr keeps coordinates and parameters exact.
    return repr(float(v))


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".ini")


def _write_ini(parser: configparser.ConfigParser, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        parser.write(fh)


def write_dataset(mset: MeasurementSet, csv_path) -> tuple[Path, Path]:
    """Write ``mset`` as CSV plus its metadata sidecar; returns both paths."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_HEADER)
        for (x, y), p in zip(mset.locations, mset.power):
            w.writerow([fmt_num(x), fmt_num(y), fmt_db(p)])
    meta = configparser.ConfigParser()
    meta[SIDECAR_SECTION] = {
        "region_x_m": fmt_num(mset.region[0]),
        "region_y_m": fmt_num(mset.region[1]),
        "wavelength_m": fmt_num(mset.wavelength),
        "grid_spacing_m": fmt_num(mset.grid_spacing),
    }
    side = sidecar_path(csv_path)
    _write_ini(meta, side)
    return csv_path, side


def read_dataset(csv_path) -> MeasurementSet:
    csv_path = Path(csv_path)
    side = sidecar_path(csv_path)
    if not side.exists():
        raise FileNotFoundError(f"metadata sidecar {side} not found")
    meta = configparser.ConfigParser()
    meta.read(side, encoding="utf-8")
    if SIDECAR_SECTION not in meta:
        raise ValueError(f"{side} lacks a [{SIDECAR_SECTION}] section")
    sec = meta[SIDECAR_SECTION]
    missing = [k for k in SIDECAR_KEYS if k not in sec]
    if missing:
        raise ValueError(f"{side} is missing {', '.join(missing)}")
    with open(csv_path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != DATASET_HEADER:
            raise ValueError(f"{csv_path}: expected header {','.join(DATASET_HEADER)}")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows, dtype=float).reshape(-1, 3)
    return MeasurementSet(data[:, :2], data[:, 2], (sec.getfloat("region_x_m"), sec.getfloat("region_y_m")),
                          sec.getfloat("wavelength_m"), sec.getfloat("grid_spacing_m"))


def write_grid(grid: QuantizedGrid, path):
    """One row per grid point: 1-based ``i, j``, its location, value and mask."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "x_m", "y_m", "value_db", "mask"])
        for i in range(1, grid.spec.n_rows + 1):
            for j in range(1, grid.spec.n_cols + 1):
                loc = grid_point_location(grid.spec, i, j)
                w.writerow([i, j, fmt_num(loc.x), fmt_num(loc.y), fmt_db(grid.values[i - 1, j - 1]),
                            int(grid.mask[i - 1, j - 1])])


def write_params(path, knn: KnnParams | None = None, kriging: KrigingParams | None = None,
                 krr: KrrParams | None = None, merge: bool = True):
    """Store parameters as ``[knn]``, ``[kriging]`` and ``[krr]`` sections.

    With ``merge`` the sections already in ``path`` that are not being
    written are kept, so the three estimators can be trained one by one
    into the same file.
    """
    parser = configparser.ConfigParser()
    if merge and Path(path).exists():
        parser.read(path, encoding="utf-8")
    if knn is not None:
        parser["knn"] = {"k": str(knn.k)}
    if kriging is not None:
        parser["kriging"] = {
            "shadow_variance": fmt_num(kriging.shadow_variance),
            "shadow_half_distance": fmt_num(kriging.shadow_half_distance),
            "noise_variance": fmt_num(kriging.noise_variance),
        }
    if krr is not None:
        parser["krr"] = {"reg": fmt_num(krr.reg), "kernel": krr.kernel.value, "width": fmt_num(krr.width)}
    ordered = configparser.ConfigParser()
    for name in ("knn", "kriging", "krr"):
        if name in parser:
            ordered[name] = dict(parser[name])
    _write_ini(ordered, path)


def read_params(path) -> dict:
    """``{"knn": KnnParams, ...}`` for every section present in ``path``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"params file {path} not found")
    parser = configparser.ConfigParser()
    parser.read(path, encoding="utf-8")
    out = {}
    if "knn" in parser:
        out["knn"] = KnnParams(parser["knn"].getint("k"))
    if "kriging" in parser:
        s = parser["kriging"]
        out["kriging"] = KrigingParams(s.getfloat("shadow_variance"), s.getfloat("shadow_half_distance"),
                                       s.getfloat("noise_variance"))
    if "krr" in parser:
        s = parser["krr"]
        out["krr"] = KrrParams(s.getfloat("reg"), Kernel(s.get("kernel")), s.getfloat("width"))
    return out
