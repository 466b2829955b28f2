# Theta snapshot files.
#
# Text layout: a header line "d m L", then every layer matrix W_1..W_L in
# row-major order, one matrix row per line, values printed with 17
# significant digits so that load(save(theta)) is bit-exact.

from pathlib import Path

import numpy as np

from ..utils import SchemaMismatch
from . import NetShape, Theta


def save_theta(theta: Theta, file_path: Path) -> Path:
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    shape = theta.shape
    with open(file_path, "w", encoding="utf-8") as f:
        f.write(f"{shape.d} {shape.m} {shape.L}\n")
        for w in theta.weights:
            for row in w:
                f.write(" ".join(format(value, ".17g") for value in row))
                f.write("\n")
    return file_path


def load_theta(file_path: Path) -> Theta:
    """Read a snapshot written by save_theta.

    Raises:
        SchemaMismatch: If the header or the number of values is inconsistent
    """
    with open(file_path, "r", encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 3:
            raise SchemaMismatch(f"{file_path}: header must be 'd m L', got {' '.join(header)!r}")
        try:
            shape = NetShape(*(int(token) for token in header))
        except ValueError as e:
            raise SchemaMismatch(f"{file_path}: bad header: {e}")
        values = [float(token) for line in f for token in line.split()]
    if len(values) != shape.n_params:
        raise SchemaMismatch(
            f"{file_path}: expected {shape.n_params} values for {shape}, found {len(values)}"
        )
    return Theta(shape, np.array(values, dtype=np.float64))
