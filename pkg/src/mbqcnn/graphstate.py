"""Graph (cluster) states, data attachment and measurement-pattern contraction.

A cluster node starts in ``|+>`` (or a supplied port state) and every edge
applies one CZ.  A measurement pattern assigns each measured node a
single-qubit bra; contracting the bras against the state leaves the
unnormalized residual on the kept nodes.  Only the outcome branch written
in the pattern is simulated, no byproduct feed-forward.

Two contraction routes exist:

* :func:`contract` works on an explicit dense state (the reference route).
* :func:`contract_graph` streams: nodes are added one at a time and each
  measured node is projected as soon as all of its neighbours exist.  Since
  CZ gates commute with projections on other qubits this is exact, and it
  keeps the live register small for long gadget chains.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .qstate import (
    BRA_PLUS,
    BRA_ZERO,
    MAX_QUBITS,
    CapacityError,
    StateVector,
    apply_cz,
    make_plus_state,
    project_out,
)

Label = Hashable

_PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2.0)


class ProjectorKind(enum.Enum):
    FIXED_ZERO = "fixed_zero"
    FIXED_PLUS = "fixed_plus"
    PLUS_RZ = "plus_rz"
    ZERO_RY_RZ = "zero_ry_rz"

    @property
    def n_slots(self) -> int:
        return _SLOT_COUNTS[self]


_SLOT_COUNTS = {
    ProjectorKind.FIXED_ZERO: 0,
    ProjectorKind.FIXED_PLUS: 0,
    ProjectorKind.PLUS_RZ: 1,
    ProjectorKind.ZERO_RY_RZ: 2,
}


def plus_rz_bra(theta: float) -> np.ndarray:
    """``<+| Rz(theta)``: the equatorial one-way-computing basis."""
    return np.array([np.exp(-0.5j * theta), np.exp(0.5j * theta)]) / np.sqrt(2.0)


def zero_ry_rz_bra(alpha: float, beta: float) -> np.ndarray:
    """``<0| Ry(alpha) Rz(beta)``, the first row of ``Ry(alpha) Rz(beta)``."""
    return np.array(
        [
            np.cos(alpha / 2) * np.exp(-0.5j * beta),
            -np.sin(alpha / 2) * np.exp(0.5j * beta),
        ]
    )


@dataclass(frozen=True)
class ProjectorSpec:
    kind: ProjectorKind
    slots: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(int(s) for s in self.slots))
        if len(self.slots) != self.kind.n_slots:
            raise ValueError(
                f"{self.kind.value} takes {self.kind.n_slots} slots, got {len(self.slots)}"
            )

    def bra(self, params: Sequence[float]) -> np.ndarray:
        if self.kind is ProjectorKind.FIXED_ZERO:
            return BRA_ZERO
        if self.kind is ProjectorKind.FIXED_PLUS:
            return BRA_PLUS
        if self.kind is ProjectorKind.PLUS_RZ:
            return plus_rz_bra(params[self.slots[0]])
        return zero_ry_rz_bra(params[self.slots[0]], params[self.slots[1]])


FIXED_ZERO = ProjectorSpec(ProjectorKind.FIXED_ZERO)
FIXED_PLUS = ProjectorSpec(ProjectorKind.FIXED_PLUS)


@dataclass(frozen=True)
class GraphSpec:
    node_labels: tuple
    edges: frozenset
    input_ports: tuple = ()

    def __post_init__(self):
        nodes = tuple(self.node_labels)
        if len(set(nodes)) != len(nodes):
            raise ValueError("duplicate node labels")
        known = set(nodes)
        edges = set()
        for e in self.edges:
            pair = tuple(e)
            if len(pair) != 2 or pair[0] == pair[1]:
                raise ValueError(f"self-loop or malformed edge {pair!r}")
            a, b = pair
            if a not in known or b not in known:
                raise ValueError(f"edge ({a!r}, {b!r}) uses an undeclared label")
            edges.add(frozenset((a, b)))
        ports = tuple(self.input_ports)
        if len(set(ports)) != len(ports):
            raise ValueError("input ports must be distinct")
        for p in ports:
            if p not in known:
                raise ValueError(f"port {p!r} is not a declared label")
        object.__setattr__(self, "node_labels", nodes)
        object.__setattr__(self, "edges", frozenset(edges))
        object.__setattr__(self, "input_ports", ports)

    @classmethod
    def build(cls, nodes: Iterable[Label], edges: Iterable, ports: Iterable[Label] = ()):
        return cls(tuple(nodes), frozenset(frozenset(e) for e in edges), tuple(ports))

    @property
    def n_nodes(self) -> int:
        return len(self.node_labels)

    def index(self, label: Label) -> int:
        return self.node_labels.index(label)

    def neighbours(self) -> dict:
        adj = {v: set() for v in self.node_labels}
        for e in self.edges:
            a, b = tuple(e)
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def degree(self, label: Label) -> int:
        return sum(1 for e in self.edges if label in e)

    def sorted_edges(self) -> list:
        """Edges as ``(a, b)`` pairs in declared node order; deterministic."""
        pos = {v: i for i, v in enumerate(self.node_labels)}
        pairs = [tuple(sorted(e, key=pos.__getitem__)) for e in self.edges]
        return sorted(pairs, key=lambda p: (pos[p[0]], pos[p[1]]))


@dataclass(frozen=True)
class MeasurementPattern:
    """Per-node projector assignment.

    Kept (output) nodes are simply absent from ``assignments``.
    """

    assignments: Mapping
    total_params: int = field(default=-1)

    def __post_init__(self):
        assignments = dict(self.assignments)
        used = sorted({s for p in assignments.values() for s in p.slots})
        total = len(used) if self.total_params < 0 else self.total_params
        if used != list(range(total)):
            raise ValueError(f"parameter slots must cover 0..{total - 1}, got {used}")
        object.__setattr__(self, "assignments", assignments)
        object.__setattr__(self, "total_params", total)

    def bras(self, params: Sequence[float]) -> dict:
        params = np.asarray(params, dtype=float)
        if params.shape != (self.total_params,):
            raise ValueError(
                f"expected {self.total_params} parameters, got {params.size}"
            )
        return {v: p.bra(params) for v, p in self.assignments.items()}

    def check_covers(self, labels: Iterable[Label], keep: Iterable[Label] = ()) -> None:
        labels = set(labels)
        keep = set(keep)
        measured = set(self.assignments)
        if keep & measured:
            raise ValueError(f"kept nodes carry projectors: {sorted(map(str, keep & measured))}")
        missing = labels - keep - measured
        if missing:
            raise ValueError(f"nodes without a projector: {sorted(map(str, missing))}")
        extra = measured - labels
        if extra:
            raise ValueError(f"projectors on unknown nodes: {sorted(map(str, extra))}")


def build_cluster(
    g: GraphSpec, input_states: Optional[Sequence] = None
) -> StateVector:
    """Prepare ``|+>`` on every node (port states on ports) and CZ every edge."""
    if input_states is None:
        input_states = [_PLUS] * len(g.input_ports)
    if len(input_states) != len(g.input_ports):
        raise ValueError(
            f"{len(g.input_ports)} ports but {len(input_states)} input states"
        )
    if g.n_nodes > MAX_QUBITS:
        raise CapacityError(f"{g.n_nodes} nodes exceeds limit {MAX_QUBITS}")
    port_state = dict(zip(g.input_ports, input_states))
    amps = np.ones(1, dtype=complex)
    for v in g.node_labels:
        local = port_state.get(v, _PLUS)
        if isinstance(local, StateVector):
            local = local.amplitudes
        amps = np.kron(amps, np.asarray(local, dtype=complex).reshape(2))
    state = StateVector(g.n_nodes, amps)
    for a, b in g.sorted_edges():
        state = apply_cz(state, g.index(a), g.index(b))
    return state


def attach_inputs(
    data: StateVector,
    cluster: StateVector,
    bonds: Sequence[tuple],
    g: Optional[GraphSpec] = None,
) -> StateVector:
    """Tensor ``data`` in front of ``cluster`` and CZ each (data qubit, node) bond.

    Bond node endpoints are labels of ``g`` when given, else cluster qubit
    indices.  The result orders data qubits first.
    """
    seen_data, seen_node = set(), set()
    for d, v in bonds:
        if d in seen_data or v in seen_node:
            raise ValueError(f"bond endpoint reused in ({d!r}, {v!r})")
        seen_data.add(d)
        seen_node.add(v)
        if not 0 <= d < data.n_qubits:
            raise IndexError(f"data qubit {d} out of range")
    state = data.tensor(cluster)
    k = data.n_qubits
    for d, v in bonds:
        node = g.index(v) if g is not None else int(v)
        if not 0 <= node < cluster.n_qubits:
            raise IndexError(f"cluster node {v!r} out of range")
        state = apply_cz(state, d, k + node)
    return state


def contract(
    state: StateVector,
    labels: Sequence[Label],
    pattern: MeasurementPattern,
    params: Sequence[float],
    keep: Sequence[Label] = (),
    order: Optional[Sequence[Label]] = None,
) -> tuple[StateVector, complex]:
    """Project every non-kept qubit of a dense labelled state.

    Returns the residual over ``keep`` (in the given order) and an
    amplitude: the scalar itself when nothing is kept, otherwise the
    residual norm.
    """
    labels = list(labels)
    if len(labels) != state.n_qubits:
        raise ValueError("one label per qubit required")
    pattern.check_covers(labels, keep)
    bras = pattern.bras(params)
    if order is None:
        order = [v for v in labels if v not in set(keep)]
    elif set(order) != set(labels) - set(keep):
        raise ValueError("projection order must list exactly the measured nodes")
    live = list(labels)
    for v in order:
        state, _ = project_out(state, live.index(v), bras[v])
        live.remove(v)
    if keep:
        state = _permute(state, live, list(keep))
        return state, complex(np.sqrt(state.norm_sq))
    return state, state.scalar()


def _permute(state: StateVector, current: list, target: list) -> StateVector:
    if current == target:
        return state
    n = state.n_qubits
    perm = [current.index(v) for v in target]
    amps = np.transpose(state.amplitudes.reshape((2,) * n), perm).reshape(-1)
    return StateVector(n, amps)


def contract_graph(
    g: GraphSpec,
    pattern: MeasurementPattern,
    params: Sequence[float],
    port_state=None,
    keep: Sequence[Label] = (),
    order: Optional[Sequence[Label]] = None,
) -> tuple[StateVector, complex]:
    """Streaming build-and-contract of ``g`` without materializing all nodes.

    ``port_state`` is a joint state over ``g.input_ports`` (default
    ``|+>`` on each port); ``order`` fixes the node addition order (default
    declared order).  Results agree with ``contract(build_cluster(g), ...)``.
    """
    keep = list(keep)
    keep_set = set(keep)
    pattern.check_covers(g.node_labels, keep)
    bras = pattern.bras(params)
    adj = g.neighbours()
    ports = list(g.input_ports)
    if port_state is None:
        port_state = make_plus_state(len(ports)) if ports else StateVector(0, [1.0])
    elif not isinstance(port_state, StateVector):
        port_state = StateVector.from_amplitudes(port_state)
    if port_state.n_qubits != len(ports):
        raise ValueError("port state size does not match input ports")

    pos = {v: i for i, v in enumerate(g.node_labels)}
    live = list(ports)
    psi = port_state.amplitudes.reshape((2,) * len(ports)) if ports else np.ones(())
    added = set(ports)
    for i, a in enumerate(ports):
        for b in ports[i + 1 :]:
            if b in adj[a]:
                psi = _cz_tensor(psi, live.index(a), live.index(b))

    def ready(v):
        return v not in keep_set and adj[v] <= added

    def sweep(psi):
        while True:
            candidates = sorted((v for v in live if ready(v)), key=pos.__getitem__)
            if not candidates:
                return psi
            v = candidates[0]
            psi = np.tensordot(bras[v], psi, axes=([0], [live.index(v)]))
            live.remove(v)

    psi = sweep(psi)
    sequence = order if order is not None else g.node_labels
    for v in sequence:
        if v in added:
            continue
        psi = np.multiply.outer(psi, _PLUS)
        live.append(v)
        added.add(v)
        if len(live) > MAX_QUBITS:
            raise CapacityError(f"live register reached {len(live)} qubits")
        for u in sorted(adj[v] & added - {v}, key=pos.__getitem__):
            if u in live:
                psi = _cz_tensor(psi, live.index(u), live.index(v))
        psi = sweep(psi)
    if added != set(g.node_labels):
        raise ValueError("addition order does not cover every node")
    state = StateVector(len(live), np.asarray(psi).reshape(-1))
    if keep:
        state = _permute(state, live, keep)
        return state, complex(np.sqrt(state.norm_sq))
    return state, state.scalar()


def _cz_tensor(psi: np.ndarray, a: int, b: int) -> np.ndarray:
    psi = psi.copy()
    idx = [slice(None)] * psi.ndim
    idx[a] = 1
    idx[b] = 1
    psi[tuple(idx)] *= -1
    return psi


def induced_map(
    g: GraphSpec,
    pattern: MeasurementPattern,
    params: Sequence[float],
    out_nodes: Sequence[Label],
    order: Optional[Sequence[Label]] = None,
) -> np.ndarray:
    """Linear map from port basis states to the (unnormalized) output residual."""
    out_nodes = list(out_nodes)
    overlap = set(out_nodes) & set(pattern.assignments)
    if overlap:
        raise ValueError(f"output nodes carry projectors: {sorted(map(str, overlap))}")
    k = len(g.input_ports)
    cols = []
    for j in range(2**k):
        residual, _ = contract_graph(
            g, pattern, params, StateVector.basis(k, j), keep=out_nodes, order=order
        )
        cols.append(residual.amplitudes)
    return np.stack(cols, axis=1)


def proportional_unitarity(m: np.ndarray) -> tuple[float, float]:
    """Return ``(s, err)`` with ``M^dagger M ~ s I``; ``err`` is the max deviation."""
    gram = m.conj().T @ m
    s = float(np.real(np.trace(gram)) / gram.shape[0])
    err = float(np.max(np.abs(gram - s * np.eye(gram.shape[0]))))
    return s, err


# -- serialization ---------------------------------------------------------


def to_document(
    g: GraphSpec,
    pattern: Optional[MeasurementPattern] = None,
    outputs: Sequence[Label] = (),
) -> dict:
    doc = {
        "nodes": list(g.node_labels),
        "edges": [list(e) for e in g.sorted_edges()],
        "ports": list(g.input_ports),
        "outputs": list(outputs),
    }
    if pattern is not None:
        doc["total_params"] = pattern.total_params
        doc["pattern"] = {
            str(v): {"kind": p.kind.value, "slots": list(p.slots)}
            for v, p in pattern.assignments.items()
        }
    return doc


def from_document(doc: Mapping) -> tuple[GraphSpec, Optional[MeasurementPattern], list]:
    g = GraphSpec.build(doc["nodes"], [tuple(e) for e in doc["edges"]], doc.get("ports", ()))
    pattern = None
    if "pattern" in doc:
        by_name = {str(v): v for v in g.node_labels}
        pattern = MeasurementPattern(
            {
                by_name[name]: ProjectorSpec(ProjectorKind(spec["kind"]), spec["slots"])
                for name, spec in doc["pattern"].items()
            },
            doc.get("total_params", -1),
        )
    return g, pattern, list(doc.get("outputs", ()))


def dumps(g: GraphSpec, pattern=None, outputs=()) -> str:
    return json.dumps(to_document(g, pattern, outputs), indent=2)


def loads(text: str):
    return from_document(json.loads(text))
