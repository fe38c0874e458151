"""Cluster-Ising (Haldane-type) chain: Hamiltonian, ground states, string order.

    H = -J sum_{i=1}^{N-2} Z_i X_{i+1} Z_{i+2} - h1 sum_{i=1}^{N} X_i
        - h2 sum_{i=1}^{N-1} X_i Z_{i+1}

with open boundaries.  Site ``i`` (1-based) is qubit ``i - 1``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import reduce
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .qstate import StateVector

MIN_SITES = 3
MAX_SITES = 12
DEGENERACY_GAP = 1e-10
TILT = 1e-9
SOP_THRESHOLD = 0.5

_I = sp.identity(2, format="csr", dtype=float)
_X = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
_Z = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, -1.0]]))


class EigensolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class HaldaneParams:
    n_sites: int
    j: float
    h1: float
    h2: float

    def __post_init__(self):
        if not MIN_SITES <= self.n_sites <= MAX_SITES:
            raise ValueError(f"n_sites must be in [{MIN_SITES}, {MAX_SITES}]")
        if not np.all(np.isfinite([self.j, self.h1, self.h2])):
            raise ValueError("couplings must be finite")

    @property
    def ratios(self) -> tuple[float, float]:
        if self.j == 0:
            raise ZeroDivisionError("field ratios need j != 0")
        return self.h1 / self.j, self.h2 / self.j


@dataclass
class HaldaneSample:
    params: HaldaneParams
    ground_state: StateVector
    sop: float
    label: int


@dataclass
class PhaseGrid:
    h1_over_j: np.ndarray
    h2_over_j: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.h1_over_j = np.asarray(self.h1_over_j, dtype=float)
        self.h2_over_j = np.asarray(self.h2_over_j, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.h1_over_j.size, self.h2_over_j.size):
            raise ValueError("value matrix shape does not match grid axes")


def pauli_string(n: int, ops: dict) -> sp.csr_matrix:
    """Sparse product of single-site operators; ``ops`` maps qubit -> 2x2."""
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), [ops.get(k, _I) for k in range(n)])


def haldane_hamiltonian(p: HaldaneParams, sparse: bool = False):
    n = p.n_sites
    h = sp.csr_matrix((2**n, 2**n), dtype=float)
    for i in range(n - 2):
        h = h - p.j * pauli_string(n, {i: _Z, i + 1: _X, i + 2: _Z})
    for i in range(n):
        h = h - p.h1 * pauli_string(n, {i: _X})
    for i in range(n - 1):
        h = h - p.h2 * pauli_string(n, {i: _X, i + 1: _Z})
    return h if sparse else h.toarray()


def fix_phase(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Rotate the global phase so the first non-negligible amplitude is real positive."""
    v = np.asarray(v, dtype=complex)
    nz = np.flatnonzero(np.abs(v) > tol)
    if nz.size == 0:
        return v
    a = v[nz[0]]
    return v * (abs(a) / a)


def _lowest(h: np.ndarray):
    try:
        evals, evecs = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(str(exc)) from exc
    return evals, evecs


def ground_state(p: HaldaneParams, return_energy: bool = False):
    """Lowest eigenvector, tilted by ``h1 += 1e-9`` when the gap is below 1e-10."""
    evals, evecs = _lowest(haldane_hamiltonian(p))
    if evals[1] - evals[0] < DEGENERACY_GAP:
        tilted = HaldaneParams(p.n_sites, p.j, p.h1 + TILT, p.h2)
        evals, evecs = _lowest(haldane_hamiltonian(tilted))
    state = StateVector(p.n_sites, fix_phase(evecs[:, 0]))
    if return_energy:
        return state, float(evals[0])
    return state


def sop_expectation(state: StateVector, m: int, n: int) -> float:
    """``<Z_m X_{m+1} ... X_{n-1} Z_n>`` with 1-based sites."""
    if not 1 <= m < n <= state.n_qubits:
        raise ValueError(f"need 1 <= m < n <= {state.n_qubits}, got ({m}, {n})")
    ops = {m - 1: _Z, n - 1: _Z}
    ops.update({k: _X for k in range(m, n - 1)})
    op = pauli_string(state.n_qubits, ops)
    psi = state.amplitudes
    val = np.vdot(psi, op @ psi)
    return float(val.real)


def sop_label(sop: float) -> int:
    return int(abs(sop) > SOP_THRESHOLD)


def make_sample(n_sites: int, h1_over_j: float, h2_over_j: float, j: float = 1.0) -> HaldaneSample:
    p = HaldaneParams(n_sites, j, h1_over_j * j, h2_over_j * j)
    g = ground_state(p)
    sop = sop_expectation(g, 1, n_sites)
    return HaldaneSample(p, g, sop, sop_label(sop))


def grid_axes(side: int) -> tuple[np.ndarray, np.ndarray]:
    if side < 2:
        raise ValueError("grid side must be >= 2")
    return np.linspace(0.0, 2.0, side), np.linspace(-2.0, 2.0, side)


def make_grid_dataset(n_sites: int, grid_side: int, j: float = 1.0) -> list:
    """``grid_side**2`` samples, h1/J outer loop over [0, 2], h2/J inner over [-2, 2]."""
    h1s, h2s = grid_axes(grid_side)
    return [make_sample(n_sites, a, b, j) for a in h1s for b in h2s]


def make_test_grid(n_sites: int, train_side: int, j: float = 1.0, seed: int = 0) -> list:
    """``ceil(side**2 / 10)`` samples drawn from the cell midpoints of the training grid."""
    h1s, h2s = grid_axes(train_side)
    mid1 = (h1s[:-1] + h1s[1:]) / 2
    mid2 = (h2s[:-1] + h2s[1:]) / 2
    cells = [(a, b) for a in mid1 for b in mid2]
    count = min(math.ceil(train_side**2 / 10), len(cells))
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(len(cells), size=count, replace=False))
    return [make_sample(n_sites, *cells[k], j) for k in picks]


def sop_grid(n_sites: int, side: int, j: float = 1.0) -> PhaseGrid:
    h1s, h2s = grid_axes(side)
    vals = np.array([[make_sample(n_sites, a, b, j).sop for b in h2s] for a in h1s])
    return PhaseGrid(h1s, h2s, vals)


def phase_boundary(grid: PhaseGrid, rel_threshold: float = 0.5, atol: float = 1e-9) -> list:
    """Boundary points from peaks of the second difference along h2.

    For each h1 column the central second difference of the values along
    h2 is formed; interior points where its magnitude is a local maximum
    and at least ``rel_threshold`` of the column maximum are returned.
    Columns whose second difference is flat (below ``atol`` relative to
    the value scale) contribute nothing.
    """
    if grid.values.shape[0] < 3 or grid.values.shape[1] < 3:
        raise ValueError("phase_boundary needs at least a 3x3 grid")
    points = []
    for i, h1 in enumerate(grid.h1_over_j):
        col = grid.values[i]
        d2 = np.abs(col[2:] - 2 * col[1:-1] + col[:-2])
        peak = d2.max()
        if peak <= atol * (1.0 + np.abs(col).max()):
            continue
        # equal twin peaks (symmetric profiles) are both kept
        slack = 1e-9 * peak
        padded = np.concatenate([[-np.inf], d2, [-np.inf]])
        for k in range(d2.size):
            if (d2[k] >= rel_threshold * peak and d2[k] + slack >= padded[k]
                    and d2[k] + slack >= padded[k + 2]):
                points.append((float(h1), float(grid.h2_over_j[k + 1])))
    return points


def boundary_agreement(model_pts: Sequence, ref_pts: Sequence, spacing: float) -> tuple[float, float]:
    """Fraction of ``model_pts`` within one grid ``spacing`` of a reference point
    in the same h1 column, and the largest such deviation."""
    if not model_pts:
        return 0.0, float("inf")
    ref = np.asarray(ref_pts, dtype=float).reshape(-1, 2)
    hits, worst = 0, 0.0
    for h1, h2 in model_pts:
        same = ref[np.isclose(ref[:, 0], h1)] if ref.size else ref
        dev = np.min(np.abs(same[:, 1] - h2)) if same.size else float("inf")
        worst = max(worst, dev)
        hits += dev <= spacing * (1 + 1e-9)
    return hits / len(model_pts), float(worst)


# -- export -----------------------------------------------------------------


def write_dataset(samples: Sequence[HaldaneSample], csv_path, amp_dir: Optional[Path] = None,
                  header_comment: Optional[str] = None) -> None:
    """CSV ``h1_over_j,h2_over_j,sop,label``; amplitudes as little-endian float64 pairs."""
    csv_path = Path(csv_path)
    with csv_path.open("w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["h1_over_j", "h2_over_j", "sop", "label"])
        for s in samples:
            r1, r2 = s.params.ratios
            w.writerow([f"{r1:.12g}", f"{r2:.12g}", f"{s.sop:.12g}", s.label])
    if amp_dir is not None:
        amp_dir = Path(amp_dir)
        amp_dir.mkdir(parents=True, exist_ok=True)
        for k, s in enumerate(samples):
            write_amplitudes(s.ground_state, amp_dir / f"sample_{k:04d}.bin")


def write_amplitudes(state: StateVector, path) -> None:
    pairs = np.empty(2 * len(state), dtype="<f8")
    pairs[0::2] = state.amplitudes.real
    pairs[1::2] = state.amplitudes.imag
    Path(path).write_bytes(pairs.tobytes())


def read_amplitudes(path) -> StateVector:
    pairs = np.frombuffer(Path(path).read_bytes(), dtype="<f8")
    return StateVector.from_amplitudes(pairs[0::2] + 1j * pairs[1::2])
