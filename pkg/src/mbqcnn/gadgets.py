"""Gate-implementing cluster gadgets and their circuit oracles.

Measurement conventions
-----------------------
Trainable gadget bases are ``<+|Rz(x)``.  Measuring the first node of a
CZ-linked pair ``|psi>_1 |+>_2`` in that basis leaves ``H Rz(x) |psi>`` on
node 2 (outcome branch fixed, scale ``1/sqrt(2)``), so a wire of measured
nodes with angles ``x1..xk`` applies ``H Rz(xk) ... H Rz(x1)``.  Fixed
nodes use ``<+|`` (angle 0, a bare Hadamard step).

Gadgets are composed by fusing the output node of one block with the
input node of the next; the next block's projector then measures it.
:class:`ChainBuilder` does this bookkeeping for two-wire circuits.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import graphstate as gs
from .qstate import (
    CNOT,
    HADAMARD,
    I2,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    distance_up_to_phase,
    is_unitary,
    rx,
    ry,
    rz,
)

E8_EDGES = ((1, 2), (2, 3), (3, 4), (4, 5), (3, 7), (6, 7), (7, 8))
E8_FIXED = (1, 2, 3, 4, 6, 7)
PAULIS = {"I": I2, "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}


@dataclass(frozen=True)
class RotationTriple:
    """Z-X-Z Euler angles; ``theta`` acts first: ``Rz(xi) Rx(zeta) Rz(theta)``."""

    theta: float
    zeta: float
    xi: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.theta, self.zeta, self.xi])):
            raise ValueError("rotation angles must be finite")

    def matrix(self) -> np.ndarray:
        return rz(self.xi) @ rx(self.zeta) @ rz(self.theta)

    def as_tuple(self) -> tuple:
        return (self.theta, self.zeta, self.xi)


@dataclass(frozen=True)
class UijParams:
    a: np.ndarray
    h1: float
    h2: float
    h3: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(4, 3)
        if not np.all(np.isfinite(a)) or not np.all(np.isfinite([self.h1, self.h2, self.h3])):
            raise ValueError("angles must be finite")
        object.__setattr__(self, "a", a)

    @property
    def t1(self) -> float:
        return -2 * self.h3 - np.pi / 2

    @property
    def t2(self) -> float:
        return np.pi / 2 + 2 * self.h1

    @property
    def t3(self) -> float:
        return -2 * self.h2 - np.pi / 2

    @classmethod
    def random(cls, rng: np.random.Generator) -> "UijParams":
        return cls(rng.uniform(0, 2 * np.pi, (4, 3)), *rng.uniform(0, 2 * np.pi, 3))


@dataclass(frozen=True)
class VijParams:
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.alpha, self.beta, self.gamma])):
            raise ValueError("angles must be finite")

    @classmethod
    def random(cls, rng: np.random.Generator) -> "VijParams":
        return cls(*rng.uniform(0, 2 * np.pi, 3))


@dataclass
class Gadget:
    """A graph, its pattern, bound measurement angles and output nodes."""

    graph: gs.GraphSpec
    pattern: gs.MeasurementPattern
    params: np.ndarray
    outputs: tuple
    angles: dict = field(default_factory=dict)

    def induced_map(self, order=None) -> np.ndarray:
        return gs.induced_map(self.graph, self.pattern, self.params, self.outputs, order)


@dataclass
class GadgetReport:
    target: np.ndarray
    realized: np.ndarray
    distance: float
    scale: float
    dressing: Optional[str] = None


# -- building blocks -------------------------------------------------------


class ChainBuilder:
    """Assemble multi-wire gadgets by fusing blocks at wire heads.

    Each wire has a *head*: the node currently holding the logical qubit.
    ``rotate`` measures the head at each angle in turn, growing the wire
    by one node per angle.  ``cnot`` fuses an E8 block onto two heads.
    """

    def __init__(self, wires: Sequence[str]):
        self.nodes: list = []
        self.edges: list = []
        self.assign: dict = {}
        self.values: list = []
        self.angles: dict = {}
        self.heads: dict = {}
        self.ports: list = []
        self._count = itertools.count()
        for w in wires:
            port = self._new(f"{w}_in")
            self.heads[w] = port
            self.ports.append(port)

    def _new(self, name: Optional[str] = None) -> str:
        label = name or f"q{next(self._count)}"
        self.nodes.append(label)
        return label

    def _measure(self, node: str, angle: Optional[float], tag: Optional[str] = None):
        if angle is None:
            self.assign[node] = gs.FIXED_PLUS
        else:
            self.assign[node] = gs.ProjectorSpec(gs.ProjectorKind.PLUS_RZ, (len(self.values),))
            self.values.append(float(angle))
        if tag is not None:
            self.angles[tag] = node

    def rotate(self, wire: str, angles: Sequence[Optional[float]], tags: Sequence = ()):
        """Apply ``H Rz(x)`` per angle; ``None`` means a fixed ``<+|`` node."""
        tags = list(tags) + [None] * (len(angles) - len(tags))
        for x, tag in zip(angles, tags):
            head = self.heads[wire]
            nxt = self._new()
            self.edges.append((head, nxt))
            self._measure(head, x, tag)
            self.heads[wire] = nxt
        return self

    def cnot(self, control: str, target: str, target_angle: Optional[float] = None,
             tag: Optional[str] = None):
        """Fuse an E8 block: control enters node 1, target enters node 6.

        ``target_angle`` replaces the fixed basis on node 6, which folds an
        ``Rz`` on the target in front of the CNOT.
        """
        block = {1: self.heads[control], 6: self.heads[target]}
        for k in (2, 3, 4, 5, 7, 8):
            block[k] = self._new()
        self.edges.extend((block[a], block[b]) for a, b in E8_EDGES)
        for k in E8_FIXED:
            self._measure(block[k], target_angle if k == 6 else None,
                          tag if k == 6 else None)
        self.heads[control] = block[5]
        self.heads[target] = block[8]
        return self

    def build(self, outputs: Sequence[str]) -> Gadget:
        graph = gs.GraphSpec.build(self.nodes, self.edges, self.ports)
        pattern = gs.MeasurementPattern(self.assign, len(self.values))
        outs = tuple(self.heads[w] for w in outputs)
        return Gadget(graph, pattern, np.array(self.values), outs, dict(self.angles))


def zxz_chain(rt: RotationTriple) -> list:
    """Angles whose wire realizes exactly ``rt.matrix()`` (the trailing ``H`` cancelled)."""
    return [rt.theta, rt.zeta, rt.xi, None]


# -- the four gadgets -------------------------------------------------------


def l4_gadget(rt: RotationTriple) -> Gadget:
    """4-node line; nodes 1-3 measured at (theta, zeta, xi), node 4 is the output."""
    nodes = [1, 2, 3, 4]
    graph = gs.GraphSpec.build(nodes, [(1, 2), (2, 3), (3, 4)], [1])
    pattern = gs.MeasurementPattern(
        {k: gs.ProjectorSpec(gs.ProjectorKind.PLUS_RZ, (k - 1,)) for k in (1, 2, 3)}
    )
    return Gadget(graph, pattern, np.array(rt.as_tuple()), (4,))


def l4_target(rt: RotationTriple) -> np.ndarray:
    return HADAMARD @ rz(rt.xi) @ rx(rt.zeta) @ rz(rt.theta)


def l4_literal_zero(rt: RotationTriple) -> Gadget:
    """The same line measured with the literal ``<0|`` fixed bras (angle-blind)."""
    g = l4_gadget(rt)
    pattern = gs.MeasurementPattern({k: gs.FIXED_ZERO for k in (1, 2, 3)})
    return Gadget(g.graph, pattern, np.zeros(0), g.outputs)


def e8_gadget(fixed: gs.ProjectorSpec = gs.FIXED_PLUS) -> Gadget:
    graph = gs.GraphSpec.build(range(1, 9), E8_EDGES, [1, 6])
    pattern = gs.MeasurementPattern({k: fixed for k in E8_FIXED})
    return Gadget(graph, pattern, np.zeros(0), (5, 8))


def two_qubit_decomposition_oracle(rotations: Sequence[np.ndarray]) -> np.ndarray:
    """``(R7 x R8) CNOT (R5 x R6) CNOT (R3 x R4) CNOT (R1 x R2)``."""
    rs = [np.asarray(r, dtype=complex) for r in rotations]
    if len(rs) != 8:
        raise ValueError("need eight single-qubit gates")
    for i, r in enumerate(rs, 1):
        if r.shape != (2, 2) or not is_unitary(r):
            raise ValueError(f"R_{i} is not a 2x2 unitary")
    u = np.kron(rs[0], rs[1])
    for k in (2, 4, 6):
        u = np.kron(rs[k], rs[k + 1]) @ CNOT @ u
    return u


def optimal_middle_gates(h1: float, h2: float, h3: float) -> list:
    """R3..R6 of the three-CNOT optimal circuit, parameterized by h1..h3."""
    return [
        rz(-2 * h3 - np.pi / 2) @ HADAMARD,
        ry(np.pi / 2 + 2 * h1) @ HADAMARD,
        HADAMARD.copy(),
        HADAMARD @ ry(-2 * h2 - np.pi / 2),
    ]


def uij_oracle(p: UijParams) -> np.ndarray:
    outer = [RotationTriple(*row).matrix() for row in p.a]
    r3, r4, r5, r6 = optimal_middle_gates(p.h1, p.h2, p.h3)
    return two_qubit_decomposition_oracle(
        [outer[0], outer[1], r3, r4, r5, r6, outer[2], outer[3]]
    )


def uij_cluster(p: UijParams) -> Gadget:
    """Optimized two-qubit-unitary cluster: 12 free angles plus t1, t2, t3.

    Wire A (port ``A_in``) is the CNOT control, wire B (``B_in``) the
    target.  Middle rotations bind the derived angles directly:
    ``Rz(t1) H`` is the wire (0, t1, 0), ``Ry(t2) H`` is
    (0, -pi/2, t2, pi/2, 0), ``H`` is (0) and ``H Ry(t3)`` is
    (-pi/2, t3, pi/2).
    """
    half = np.pi / 2
    rows = [RotationTriple(*row) for row in p.a]
    b = ChainBuilder(["A", "B"])
    b.rotate("A", zxz_chain(rows[0]), ["a11", "a12", "a13"])
    b.rotate("B", zxz_chain(rows[1]), ["a21", "a22", "a23"])
    b.cnot("A", "B")
    b.rotate("A", [None, p.t1, None], [None, "t1"])
    b.rotate("B", [None, -half, p.t2, half, None], [None, None, "t2"])
    b.cnot("A", "B")
    b.rotate("A", [None])
    b.rotate("B", [-half, p.t3, half], [None, "t3"])
    b.cnot("A", "B")
    b.rotate("A", zxz_chain(rows[2]), ["a31", "a32", "a33"])
    b.rotate("B", zxz_chain(rows[3]), ["a41", "a42", "a43"])
    return b.build(["A", "B"])


def split_rotation(rt: RotationTriple) -> tuple[RotationTriple, RotationTriple]:
    """Canonical split ``(rt, identity)``: ``second.matrix() @ first.matrix() == rt.matrix()``."""
    return rt, RotationTriple(0.0, 0.0, 0.0)


def controlled_rotation_oracle(p: VijParams) -> np.ndarray:
    """Controlled rotation with the control read in the Pauli-X basis.

    ``(H x Tb) CNOT (I x Rz(-gamma/2)) CNOT (H x Ta)`` with
    ``Ta = Rz(gamma/4) Rx(beta) Rz(alpha)`` and
    ``Tb = Rz(-alpha) Rx(-beta) Rz(gamma/4)``.  Control ``|+>`` gives the
    identity; control ``|->`` applies ``W^dag Rz(gamma) W`` with
    ``W = Rx(beta) Rz(alpha)``.
    """
    ta = rz(p.gamma / 4) @ rx(p.beta) @ rz(p.alpha)
    tb = rz(-p.alpha) @ rx(-p.beta) @ rz(p.gamma / 4)
    middle = np.kron(I2, rz(-p.gamma / 2))
    return np.kron(HADAMARD, tb) @ CNOT @ middle @ CNOT @ np.kron(HADAMARD, ta)


def vij_angles(p: VijParams) -> dict:
    """Measurement angles of the named V_ij nodes."""
    return {
        "La": (p.alpha, p.beta, p.gamma / 4),
        "Lb": (p.gamma / 4, -p.beta, -p.alpha),
        "shared": -p.gamma / 2,
        "extra_in": 0.0,
        "extra_out": 0.0,
    }


def vij_cluster(p: VijParams, angles: Optional[dict] = None) -> tuple[Gadget, GadgetReport]:
    """Controlled-rotation cluster built from two fused E8 blocks.

    Layout: control port ``C_in`` (extra qubit, one Hadamard step) feeds E8
    node 1; the target line ``La`` (four measured nodes, the last fixed)
    feeds E8 node 6.  The first E8's target output is the second E8's node 6,
    the shared qubit, measured at ``-gamma/2``.  The second E8's target
    output starts ``Lb`` (again four measured nodes), and the control leaves
    through one more fixed node.  ``angles`` overrides :func:`vij_angles`
    (used to probe the constraints).
    """
    ang = vij_angles(p) if angles is None else angles
    b = ChainBuilder(["C", "T"])
    b.rotate("C", [None], ["extra_in"])
    b.rotate("T", list(ang["La"]) + [None], ["La1", "La2", "La3"])
    b.cnot("C", "T")
    b.cnot("C", "T", target_angle=ang["shared"], tag="shared")
    b.rotate("T", list(ang["Lb"]) + [None], ["Lb1", "Lb2", "Lb3"])
    b.rotate("C", [None], ["extra_out"])
    gadget = b.build(["C", "T"])
    report = compare(controlled_rotation_oracle(p), gadget.induced_map())
    return gadget, report


def alternate_notation_relations(p: VijParams) -> dict:
    """Cross-check the alternate angle notation against the built angles.

    With ``a5j`` the L4^a angles and ``a'5j`` the L4^b angles the relations
    ``a51 = -a'53``, ``a52 = -a'52``, ``a53 = a'51`` hold by construction;
    ``s = a52/2`` is compared with the shared-qubit angle actually required.
    """
    ang = vij_angles(p)
    a = ang["La"]
    a_prime = ang["Lb"]
    return {
        "a51=-a'53": bool(np.isclose(a[0], -a_prime[2])),
        "a52=-a'52": bool(np.isclose(a[1], -a_prime[1])),
        "a53=a'51": bool(np.isclose(a[2], a_prime[0])),
        "s=a52/2": bool(np.isclose(a[1] / 2, ang["shared"])),
    }


# -- verification -----------------------------------------------------------


def compare(target: np.ndarray, realized: np.ndarray, dressing: Optional[str] = None) -> GadgetReport:
    scale, _ = gs.proportional_unitarity(realized)
    return GadgetReport(target, realized, distance_up_to_phase(realized, target), scale, dressing)


def pauli_dressings(n_outputs: int = 2):
    for names in itertools.product("IXYZ", repeat=n_outputs):
        op = np.ones((1, 1), dtype=complex)
        for name in names:
            op = np.kron(op, PAULIS[name])
        yield "".join(names), op


def best_dressing(realized: np.ndarray, target: np.ndarray, tol: float = 1e-9):
    """First Pauli dressing ``P`` (identity tried first) with ``P M ~ target``."""
    n_out = int(round(np.log2(realized.shape[0])))
    for name, op in pauli_dressings(n_out):
        if distance_up_to_phase(op @ realized, target) <= tol:
            return name, op
    return None, None


def _random_qubit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    return v / np.linalg.norm(v)


def verify_gadget(kind: str, trials: int = 20, seed: int = 0) -> dict:
    """Compare a gadget family against its oracle on random draws.

    Returns a JSON-friendly summary: max distance, scale range, the Pauli
    dressing used (``"II"`` when none is needed), trial count and seed.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    kind = kind.upper()
    rng = np.random.default_rng(seed)
    distances, scales = [], []
    dressing = None

    if kind == "L4":
        for _ in range(trials):
            rt = RotationTriple(*rng.uniform(0, 2 * np.pi, 3))
            m = l4_gadget(rt).induced_map()
            target = l4_target(rt)
            psi = _random_qubit(rng)
            distances.append(max(distance_up_to_phase(m, target),
                                 distance_up_to_phase(m @ psi, target @ psi)))
            scales.append(gs.proportional_unitarity(m)[0])
    elif kind == "E8":
        m = e8_gadget().induced_map()
        dressing, op = best_dressing(m, CNOT)
        if dressing is None:
            dressing, op = "none", np.eye(4)
        dressed = op @ m
        inputs = [np.eye(4)[:, j] for j in range(4)]
        inputs += [np.kron(_random_qubit(rng), _random_qubit(rng)) for _ in range(trials)]
        for v in inputs:
            distances.append(distance_up_to_phase(dressed @ v, CNOT @ v))
        scales.append(gs.proportional_unitarity(m)[0])
    elif kind == "UIJ":
        for _ in range(trials):
            p = UijParams.random(rng)
            rep = compare(uij_oracle(p), uij_cluster(p).induced_map())
            distances.append(rep.distance)
            scales.append(rep.scale)
    elif kind == "VIJ":
        for _ in range(trials):
            _, rep = vij_cluster(VijParams.random(rng))
            distances.append(rep.distance)
            scales.append(rep.scale)
    else:
        raise ValueError(f"unknown gadget kind {kind!r}")

    return {
        "kind": kind,
        "trials": trials,
        "seed": seed,
        "max_distance": float(max(distances)),
        "min_scale": float(min(scales)),
        "max_scale": float(max(scales)),
        "dressing": dressing,
    }
