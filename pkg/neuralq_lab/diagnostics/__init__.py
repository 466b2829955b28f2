# Numerical probes of the assumptions behind projected neural Q-learning.
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from ..network import Theta
from ..utils import DirectionMissing, format_summary

PROBE_COLUMNS = ["probe", "m", "L", "omega", "seed", "value"]


class RegularityStatus(Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INCONCLUSIVE = "INCONCLUSIVE"


class ReferencePoint(Enum):
    INITIAL = "initial"  # theta_0
    CURRENT = "current"  # theta_t itself, zero displacement


@dataclass(frozen=True, eq=False)
class SigmaPair:
    """Second-moment matrices of the initialization gradients.

    When reduced, both matrices are expressed in the orthonormal basis of
    the span of the gradients (columns of `basis`).
    """

    sigma_pi: np.ndarray
    sigma_star: Optional[np.ndarray] = None
    theta0: Optional[Theta] = None
    exact: bool = True
    n_samples: Optional[int] = None
    basis: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def reduced(self) -> bool:
        return self.basis is not None

    def star(self) -> np.ndarray:
        if self.sigma_star is None:
            raise DirectionMissing("sigma_star needs a direction theta")
        return self.sigma_star


@dataclass(frozen=True)
class RegularityResult:
    sup_alpha: float  # inf when unbounded
    unbounded: bool
    status: RegularityStatus
    beta: Optional[float]  # 1 - (safety * sup_alpha)^(-1/2), None when not admissible
    safety: float
    gamma: float
    min_eigenvalue: float
    pattern: Optional[tuple[int, ...]] = None  # worst greedy map, when enumerated

    def verdict(self) -> str:
        alpha = "unbounded" if self.unbounded else f"{self.sup_alpha:.6g}"
        return f"{self.status.value} (sup alpha = {alpha})"


@dataclass(frozen=True, eq=False)
class MixingEstimate:
    lam: float
    rho: float
    tau_star: int
    eta_T: float
    distances: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass(frozen=True)
class ProbeCell:
    probe: str
    m: int
    L: int
    omega: float
    seed: int
    value: float
    n_samples: int = 1
    index: int = 0  # step or window index for per-run probes


@dataclass
class ProbeReport:
    cells: list[ProbeCell] = field(default_factory=list)

    def add(self, **cell) -> None:
        self.cells.append(ProbeCell(**cell))

    def extend(self, other: "ProbeReport") -> "ProbeReport":
        self.cells.extend(other.cells)
        return self

    def to_frame(self) -> pd.DataFrame:
        columns = PROBE_COLUMNS + ["n_samples", "index"]
        frame = pd.DataFrame([asdict(cell) for cell in self.cells], columns=columns)
        return frame.sort_values(["probe", "m", "L", "omega", "seed", "index"], kind="stable").reset_index(drop=True)

    def select(self, probe: str) -> pd.DataFrame:
        frame = self.to_frame()
        return frame[frame["probe"] == probe].reset_index(drop=True)

    def summary(self) -> pd.DataFrame:
        """Median, mean and cell count per (probe, m, L)."""
        frame = self.to_frame()
        return (
            frame.groupby(["probe", "m", "L"])["value"]
            .agg(["median", "mean", "count"])
            .reset_index()
        )

    def medians(self, probe: str) -> pd.Series:
        """Median value per width m for one probe."""
        return self.select(probe).groupby("m")["value"].median()

    def to_csv(self, file_path: Path) -> Path:
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame()[PROBE_COLUMNS].to_csv(file_path, index=False, float_format="%.17g")
        return file_path

    def write_summary(self, file_path: Path, title: str = "Probe summary") -> Path:
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        frame = self.to_frame()
        text = format_summary(title, cells=len(frame), probes=", ".join(sorted(frame["probe"].unique())))
        with open(file_path, "w", encoding="utf-8") as f:
            f.write(text.lstrip("\n") + "\n\n")
            f.write(self.summary().to_string(index=False) + "\n")
        return file_path
