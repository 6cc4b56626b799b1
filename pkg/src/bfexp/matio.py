"""File formats for BF16 pattern matrices and golden vectors.

Binary matrices are flat little-endian 16-bit words in row-major order,
with a text sidecar (same path + ".shape") holding "rows cols". Hex-text
matrices hold one row per line, whitespace-separated 4-digit uppercase hex
patterns; they round trip with the binary form and are the fixture format.
Golden-vector files pair input and output patterns, one "IIII OOOO" line
per input, sorted by input pattern.
"""

from __future__ import annotations

import os

import numpy as np


def _as_u16_matrix(mat) -> np.ndarray:
    a = np.asarray(mat, dtype=np.uint16)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D pattern matrix, got shape {a.shape}")
    return a


def save_matrix(path: str | os.PathLike, mat) -> None:
    a = _as_u16_matrix(mat)
    with open(path, "wb") as f:
        f.write(a.astype("<u2").tobytes())
    with open(f"{os.fspath(path)}.shape", "w") as f:
        f.write(f"{a.shape[0]} {a.shape[1]}\n")


def load_matrix(path: str | os.PathLike) -> np.ndarray:
    with open(f"{os.fspath(path)}.shape") as f:
        rows, cols = (int(tok) for tok in f.read().split())
    data = np.fromfile(path, dtype="<u2")
    if data.size != rows * cols:
        raise ValueError(
            f"{path}: sidecar says {rows}x{cols} but file holds {data.size} words"
        )
    return data.astype(np.uint16).reshape(rows, cols)


def save_hex_matrix(path: str | os.PathLike, mat) -> None:
    a = _as_u16_matrix(mat)
    with open(path, "w") as f:
        for row in a:
            f.write(" ".join(f"{int(v):04X}" for v in row) + "\n")


def load_hex_matrix(path: str | os.PathLike) -> np.ndarray:
    rows = []
    with open(path) as f:
        for ln, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([int(tok, 16) for tok in line.split()])
            except ValueError as e:
                raise ValueError(f"{path}:{ln}: bad hex token") from e
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path}: ragged rows")
    return np.array(rows, dtype=np.uint16)


def write_golden_vectors(path: str | os.PathLike, inputs, outputs) -> None:
    xi = np.asarray(inputs, dtype=np.uint16).ravel()
    yo = np.asarray(outputs, dtype=np.uint16).ravel()
    if xi.shape != yo.shape:
        raise ValueError("inputs and outputs differ in length")
    order = np.argsort(xi, kind="stable")
    with open(path, "w") as f:
        for x, y in zip(xi[order], yo[order]):
            f.write(f"{int(x):04X} {int(y):04X}\n")


def read_golden_vectors(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    pairs = load_hex_matrix(path)
    if pairs.shape[1] != 2:
        raise ValueError(f"{path}: golden vector lines must hold exactly 2 words")
    return pairs[:, 0].copy(), pairs[:, 1].copy()
