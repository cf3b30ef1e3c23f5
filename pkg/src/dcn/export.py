"""CSV and binary PGM writers for attention maps and weight vectors."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def write_csv_matrix(path, matrix: np.ndarray) -> None:
    """One CSV row per matrix row, full float precision."""
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    with open(path, "w") as fh:
        for row in m:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def read_csv_matrix(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(x) for x in line.split(",")])
    return np.array(rows)


def heatmap_bytes(matrix: np.ndarray) -> np.ndarray:
    """Quantize each row to uint8 by its own maximum (row max -> 255)."""
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if np.any(m < 0.0):
        raise ValueError("heatmaps need non-negative values")
    row_max = m.max(axis=1, keepdims=True)
    safe = np.where(row_max > 0.0, row_max, 1.0)
    return np.rint(255.0 * m / safe).astype(np.uint8)


def write_pgm(path, matrix: np.ndarray) -> None:
    """Binary 8-bit PGM (P5) of a row-scaled heatmap."""
    img = heatmap_bytes(matrix)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes(order="C"))


def read_pgm(path) -> np.ndarray:
    """Read back a binary P5 file written by write_pgm."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ValueError(f"{path}: not a binary PGM (got {magic!r})")
        dims = fh.readline().split()
        w, h = int(dims[0]), int(dims[1])
        maxval = int(fh.readline())
        if maxval != 255:
            raise ValueError(f"{path}: expected 8-bit data, got maxval {maxval}")
        data = np.frombuffer(fh.read(w * h), dtype=np.uint8)
    return data.reshape(h, w).copy()


def export_attention(result, out_dir) -> list[Path]:
    """Dump per-layer co-attention maps, summary weights and level weights.

    ``result`` is a model ForwardResult; every artifact is written both as
    CSV and as a PGM heatmap. Returns the written paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts: list[tuple[str, np.ndarray]] = []
    for layer_idx, maps in enumerate(result.trace.maps):
        artifacts.append((f"a_q_layer{layer_idx}", maps.a_q.data))
        artifacts.append((f"a_v_layer{layer_idx}", maps.a_v.data))
    artifacts.append(("alpha_q", result.alpha_q.data[None, :]))
    artifacts.append(("alpha_v", result.alpha_v.data[None, :]))
    artifacts.append(("layer_alpha", result.layer_alpha.data[None, :]))
    artifacts.append(("scores", result.scores.data[None, :]))
    written = []
    for name, value in artifacts:
        csv_path = out_dir / f"{name}.csv"
        pgm_path = out_dir / f"{name}.pgm"
        write_csv_matrix(csv_path, value)
        write_pgm(pgm_path, value)
        written += [csv_path, pgm_path]
    return written
