"""The three trainable models and their shared parameter interface.

* :class:`ClusterModel` -- square-lattice cluster with data qubits bonded
  in by CZ; every qubit (data and cluster) is projected onto
  ``<0|Ry(alpha)Rz(beta)`` and the output is the squared amplitude.
* :class:`QcnnModel` -- one convolution layer of three two-qubit gates and
  one pooling layer of two controlled rotations on four qubits.
* :class:`CnnModel` -- five 3-tap kernels, sigmoid, average pooling, a
  2-unit hidden layer and one output unit.

Models are immutable; :func:`set_params` returns a new model.  Each model
evaluates a whole batch of encoded inputs in one call via ``predict_batch``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import graphstate as gs
from .qstate import CNOT, HADAMARD, I2, StateVector, ry, rz

IRIS_LABELS = (0.0, 0.5, 1.0)
HALDANE_THRESHOLD = 0.5
CNN_CLAIMED_PARAMS = 28


# -- lattice topologies ------------------------------------------------------


def node(r: int, c: int) -> str:
    return f"L{r}_{c}"


@dataclass(frozen=True)
class LatticeTopology:
    name: str
    graph: gs.GraphSpec
    n_data: int
    bonds: tuple

    @property
    def n_measured(self) -> int:
        return self.n_data + self.graph.n_nodes

    @property
    def n_params(self) -> int:
        return 2 * self.n_measured

    @property
    def data_labels(self) -> tuple:
        return tuple(f"d{k + 1}" for k in range(self.n_data))

    @property
    def measured_labels(self) -> tuple:
        """Slot order: data qubits, then cluster nodes in declared order."""
        return self.data_labels + self.graph.node_labels

    def pattern(self) -> gs.MeasurementPattern:
        return gs.MeasurementPattern(
            {
                v: gs.ProjectorSpec(gs.ProjectorKind.ZERO_RY_RZ, (2 * i, 2 * i + 1))
                for i, v in enumerate(self.measured_labels)
            }
        )

    def full_graph(self) -> gs.GraphSpec:
        """Cluster plus data nodes, the data nodes acting as input ports."""
        edges = list(self.graph.edges) + [(self.data_labels[d], v) for d, v in self.bonds]
        return gs.GraphSpec.build(self.measured_labels, edges, self.data_labels)


def _grid(rows: int, cols: int) -> tuple[list, list]:
    nodes = [node(r, c) for r in range(rows) for c in range(cols)]
    edges = [(node(r, c), node(r, c + 1)) for r in range(rows) for c in range(cols - 1)]
    edges += [(node(r, c), node(r + 1, c)) for r in range(rows - 1) for c in range(cols)]
    return nodes, edges


def haldane_lattice() -> LatticeTopology:
    """2x5 lattice; data qubits d1..d3 bond to the middle of row 0."""
    nodes, edges = _grid(2, 5)
    graph = gs.GraphSpec.build(nodes, edges)
    bonds = ((0, node(0, 1)), (1, node(0, 2)), (2, node(0, 3)))
    return LatticeTopology("haldane-2x5", graph, 3, bonds)


def iris_lattice() -> LatticeTopology:
    """2x4 lattice, extra nodes on the column-0 boundary, crossed diagonals on columns 2-3.

    The 4-qubit input port is ``(e1, L0_0, L1_0, e2)`` bonded to ``d1..d4``.
    """
    nodes, edges = _grid(2, 4)
    nodes += ["e1", "e2"]
    edges += [("e1", node(0, 0)), ("e2", node(1, 0))]
    edges += [(node(0, 2), node(1, 3)), (node(0, 3), node(1, 2))]
    graph = gs.GraphSpec.build(nodes, edges)
    bonds = ((0, "e1"), (1, node(0, 0)), (2, node(1, 0)), (3, "e2"))
    return LatticeTopology("iris-2x4x2", graph, 4, bonds)


TOPOLOGIES = {"haldane-2x5": haldane_lattice, "iris-2x4x2": iris_lattice}


# -- cluster model -------------------------------------------------------------


def _kron_all(vectors: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones(1, dtype=complex)
    for v in vectors:
        out = np.kron(out, v)
    return out


def _bits(n: int) -> np.ndarray:
    idx = np.arange(2**n)
    return ((idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1).astype(np.int8)


@dataclass(frozen=True, eq=False)
class ClusterModel:
    topology: LatticeTopology
    params: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.params, dtype=float).reshape(-1)
        if p.size != self.topology.n_params:
            raise ValueError(f"{self.topology.name} takes {self.topology.n_params} params, got {p.size}")
        object.__setattr__(self, "params", p)

    @classmethod
    def init(cls, topology: LatticeTopology, rng: np.random.Generator) -> "ClusterModel":
        return cls(topology, rng.uniform(0, 2 * np.pi, topology.n_params))

    @property
    def n_params(self) -> int:
        return self.topology.n_params

    @property
    def n_inputs(self) -> int:
        return 2**self.topology.n_data

    @cached_property
    def _tables(self):
        # Graph-state signs and the sign each data basis state imprints via the bonds.
        topo = self.topology
        g = topo.graph
        n = g.n_nodes
        bits = _bits(n)
        pos = {v: i for i, v in enumerate(g.node_labels)}
        parity = np.zeros(2**n, dtype=np.int64)
        for a, b in g.sorted_edges():
            parity += bits[:, pos[a]] * bits[:, pos[b]]
        graph_amp = (1 - 2 * (parity % 2)) * 2.0 ** (-n / 2)
        dbits = _bits(topo.n_data)
        bond_parity = np.zeros((2**topo.n_data, 2**n), dtype=np.int64)
        for d, v in topo.bonds:
            bond_parity += np.outer(dbits[:, d], bits[:, pos[v]])
        bond_sign = (1 - 2 * (bond_parity % 2)).astype(float)
        return graph_amp, bond_sign

    def weights(self) -> np.ndarray:
        """``w`` with amplitude ``<M| U_CZ (|x> |C>) = sum_z x_z w_z``."""
        graph_amp, bond_sign = self._tables
        pairs = self.params.reshape(-1, 2)
        bras = [gs.zero_ry_rz_bra(a, b) for a, b in pairs]
        k = self.topology.n_data
        data_bra = _kron_all(bras[:k])
        cluster_bra = _kron_all(bras[k:])
        return data_bra * (bond_sign @ (cluster_bra * graph_amp))

    def amplitudes(self, inputs: np.ndarray) -> np.ndarray:
        return np.asarray(inputs, dtype=complex).reshape(-1, self.n_inputs) @ self.weights()

    def predict_batch(self, inputs: np.ndarray) -> np.ndarray:
        return np.abs(self.amplitudes(inputs)) ** 2

    def with_params(self, v) -> "ClusterModel":
        # share the sign tables; they depend only on the topology
        new = ClusterModel(self.topology, v)
        if "_tables" in self.__dict__:
            new.__dict__["_tables"] = self.__dict__["_tables"]
        return new


def mbqcnn_predict(m: ClusterModel, x) -> float:
    """Squared amplitude of projecting every qubit of the bonded cluster."""
    amps = x.amplitudes if isinstance(x, StateVector) else np.asarray(x)
    if amps.size != m.n_inputs:
        raise ValueError(f"sample has {amps.size} amplitudes, model expects {m.n_inputs}")
    return float(m.predict_batch(amps[None, :])[0])


def mbqcnn_predict_contract(m: ClusterModel, x: StateVector) -> float:
    """Same output through the generic build/attach/contract route."""
    topo = m.topology
    cluster = gs.build_cluster(topo.graph)
    state = gs.attach_inputs(x, cluster, topo.bonds, topo.graph)
    _, amp = gs.contract(state, topo.measured_labels, topo.pattern(), m.params)
    return abs(amp) ** 2


# -- QCNN ----------------------------------------------------------------------


def _cnot_reversed() -> np.ndarray:
    swap = np.eye(4)[[0, 2, 1, 3]]
    return swap @ CNOT @ swap


CNOT_REV = _cnot_reversed()


def conv_gate(tau: Sequence[float]) -> np.ndarray:
    """``[Ry(t1) x Rz(t2)H] CNOT [Ry(t3) x H] CNOT' [Rz(t4) x Ry(t5)] CNOT [Rz(t6) x Rz(t7)Ry(t8)]``.

    ``CNOT'`` has control and target swapped.
    """
    t = list(tau)
    return (
        np.kron(ry(t[0]), rz(t[1]) @ HADAMARD)
        @ CNOT
        @ np.kron(ry(t[2]), HADAMARD)
        @ CNOT_REV
        @ np.kron(rz(t[3]), ry(t[4]))
        @ CNOT
        @ np.kron(rz(t[5]), rz(t[6]) @ ry(t[7]))
    )


def pool_gate(tau: Sequence[float]) -> np.ndarray:
    """``[I x Rz(t1)Ry(t2)] CNOT [I x Rz(-t1)Ry(-t2)] CNOT``, control on the first qubit."""
    a, b = tau
    return (
        np.kron(I2, rz(a) @ ry(b))
        @ CNOT
        @ np.kron(I2, rz(-a) @ ry(-b))
        @ CNOT
    )


def _embed(u: np.ndarray, first: int, n: int = 4) -> np.ndarray:
    """Lift a gate on adjacent qubits ``(first, first + 1)`` to ``n`` qubits."""
    return np.kron(np.kron(np.eye(2**first), u), np.eye(2 ** (n - first - 2)))


def _embed_pair(u: np.ndarray, control: int, target: int, n: int = 4) -> np.ndarray:
    """Lift a two-qubit gate onto arbitrary (control, target) qubits."""
    full = np.zeros((2**n, 2**n), dtype=complex)
    bits = _bits(n)
    for col in range(2**n):
        c, t = bits[col, control], bits[col, target]
        for out in range(4):
            amp = u[out, 2 * c + t]
            if amp == 0:
                continue
            b = bits[col].copy()
            b[control], b[target] = out >> 1, out & 1
            full[int("".join(map(str, b)), 2), col] += amp
    return full


def _apply_pair(psi: np.ndarray, u: np.ndarray, p: int, q: int) -> np.ndarray:
    """Apply a 4x4 gate to qubits ``p`` (high) and ``q`` of a batch ``(N, 2, 2, 2, 2)``."""
    out = np.tensordot(psi, u.reshape(2, 2, 2, 2), axes=([p + 1, q + 1], [2, 3]))
    return np.moveaxis(out, [-2, -1], [p + 1, q + 1])


@dataclass(frozen=True, eq=False)
class QcnnModel:
    conv_params: np.ndarray
    pool_params: np.ndarray

    def __post_init__(self):
        conv = np.asarray(self.conv_params, dtype=float).reshape(3, 8)
        pool = np.asarray(self.pool_params, dtype=float).reshape(2, 2)
        object.__setattr__(self, "conv_params", conv)
        object.__setattr__(self, "pool_params", pool)

    n_params = 28
    n_inputs = 16

    @classmethod
    def init(cls, rng: np.random.Generator) -> "QcnnModel":
        return cls.from_vector(rng.uniform(0, 2 * np.pi, 28))

    @classmethod
    def from_vector(cls, v) -> "QcnnModel":
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.size != 28:
            raise ValueError(f"QCNN takes 28 params, got {v.size}")
        return cls(v[:24], v[24:])

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.conv_params.ravel(), self.pool_params.ravel()])

    def conv_unitary(self) -> np.ndarray:
        u = np.eye(16, dtype=complex)
        for k in range(3):
            u = _embed(conv_gate(self.conv_params[k]), k) @ u
        return u

    def unitary(self) -> np.ndarray:
        pool = _embed_pair(pool_gate(self.pool_params[0]), 0, 1) @ _embed_pair(
            pool_gate(self.pool_params[1]), 2, 3
        )
        return pool @ self.conv_unitary()

    def predict_batch(self, inputs: np.ndarray) -> np.ndarray:
        """Probability that qubits 1 and 3 (the pooling targets) read ``|+>|+>``."""
        psi = np.asarray(inputs, dtype=complex).reshape(-1, 2, 2, 2, 2)
        for k in range(3):
            psi = _apply_pair(psi, conv_gate(self.conv_params[k]), k, k + 1)
        psi = _apply_pair(psi, pool_gate(self.pool_params[0]), 0, 1)
        psi = _apply_pair(psi, pool_gate(self.pool_params[1]), 2, 3)
        plus = np.array([1.0, 1.0]) / np.sqrt(2.0)
        proj = np.einsum("nabcd,b,d->nac", psi, plus, plus)
        return np.sum(np.abs(proj) ** 2, axis=(1, 2))

    def with_params(self, v) -> "QcnnModel":
        return QcnnModel.from_vector(v)


def qcnn_predict(m: QcnnModel, x) -> float:
    amps = x.amplitudes if isinstance(x, StateVector) else np.asarray(x)
    if amps.size != 16:
        raise ValueError("QCNN expects a 4-qubit input")
    return float(m.predict_batch(amps[None, :])[0])


# -- CNN -----------------------------------------------------------------------

FROZEN_KERNEL = (4, 1)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z)))


@dataclass(frozen=True, eq=False)
class CnnModel:
    """``kernels`` (5, 3) with entry ``[4, 1]`` pinned to zero; hidden (2, 5)+2; output 2+1."""

    kernels: np.ndarray
    hidden_w: np.ndarray
    hidden_b: np.ndarray
    out_w: np.ndarray
    out_b: float
    freeze: bool = True

    def __post_init__(self):
        k = np.array(self.kernels, dtype=float).reshape(5, 3)
        if self.freeze:
            k[FROZEN_KERNEL] = 0.0
        object.__setattr__(self, "kernels", k)
        object.__setattr__(self, "hidden_w", np.asarray(self.hidden_w, dtype=float).reshape(2, 5))
        object.__setattr__(self, "hidden_b", np.asarray(self.hidden_b, dtype=float).reshape(2))
        object.__setattr__(self, "out_w", np.asarray(self.out_w, dtype=float).reshape(2))
        object.__setattr__(self, "out_b", float(self.out_b))

    n_inputs = 16

    @property
    def n_params(self) -> int:
        return 29 if self.freeze else 30

    @property
    def count_discrepancy(self) -> bool:
        """True when the true trainable count differs from the claimed 28."""
        return self.n_params != CNN_CLAIMED_PARAMS

    def _kernel_mask(self) -> np.ndarray:
        mask = np.ones((5, 3), dtype=bool)
        if self.freeze:
            mask[FROZEN_KERNEL] = False
        return mask

    @property
    def params(self) -> np.ndarray:
        return np.concatenate(
            [self.kernels[self._kernel_mask()], self.hidden_w.ravel(), self.hidden_b,
             self.out_w, [self.out_b]]
        )

    def with_params(self, v) -> "CnnModel":
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.size != self.n_params:
            raise ValueError(f"CNN takes {self.n_params} params, got {v.size}")
        mask = self._kernel_mask()
        nk = int(mask.sum())
        k = np.zeros((5, 3))
        k[mask] = v[:nk]
        rest = v[nk:]
        return CnnModel(k, rest[:10], rest[10:12], rest[12:14], rest[14], self.freeze)

    @classmethod
    def init(cls, rng: np.random.Generator, low: float = -1.0, high: float = 1.0,
             freeze: bool = True) -> "CnnModel":
        proto = cls(np.zeros((5, 3)), np.zeros((2, 5)), np.zeros(2), np.zeros(2), 0.0, freeze)
        return proto.with_params(rng.uniform(low, high, proto.n_params))

    @classmethod
    def zeros(cls, freeze: bool = True) -> "CnnModel":
        return cls(np.zeros((5, 3)), np.zeros((2, 5)), np.zeros(2), np.zeros(2), 0.0, freeze)

    def predict_batch(self, inputs: np.ndarray) -> np.ndarray:
        x = np.real(np.asarray(inputs)).reshape(-1, 16)
        windows = np.lib.stride_tricks.sliding_window_view(x, 3, axis=1)  # (N, 14, 3)
        conv = np.einsum("nit,kt->nki", windows, self.kernels)
        pooled = sigmoid(conv).mean(axis=2)  # (N, 5)
        hidden = sigmoid(pooled @ self.hidden_w.T + self.hidden_b)
        return sigmoid(hidden @ self.out_w + self.out_b)


def cnn_predict(m: CnnModel, x) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != 16:
        raise ValueError(f"CNN expects 16 inputs, got {x.size}")
    return float(m.predict_batch(x[None, :])[0])


# -- encoding, decisions, parameters ------------------------------------------------


@dataclass
class EncodedSample:
    state: StateVector
    label: float


def encode_iris(features: Sequence[float], label: float = 0.0,
                minmax: Optional[tuple] = None) -> EncodedSample:
    """Pad four features to 16 components, normalize, load as 4-qubit amplitudes.

    ``minmax=(lo, hi)`` optionally rescales each feature to [0, 1] first.
    """
    f = np.asarray(features, dtype=float).reshape(4)
    if minmax is not None:
        lo, hi = (np.asarray(a, dtype=float) for a in minmax)
        f = (f - lo) / np.where(hi > lo, hi - lo, 1.0)
    norm = np.linalg.norm(f)
    if norm == 0:
        raise ValueError("cannot encode an all-zero feature vector")
    v = np.zeros(16)
    v[:4] = f / norm
    return EncodedSample(StateVector(4, v), float(label))


def iris_class(output: float) -> float:
    """Nearest of (0, 0.5, 1); ties go to the smaller label."""
    dists = [abs(output - lab) for lab in IRIS_LABELS]
    return IRIS_LABELS[int(np.argmin(dists))]


def iris_classes(outputs: np.ndarray) -> np.ndarray:
    labels = np.asarray(IRIS_LABELS)
    d = np.abs(np.asarray(outputs)[:, None] - labels[None, :])
    return labels[np.argmin(d, axis=1)]


def haldane_classes(outputs: np.ndarray) -> np.ndarray:
    return (np.asarray(outputs) > HALDANE_THRESHOLD).astype(float)


def get_params(model) -> np.ndarray:
    return np.array(model.params, dtype=float)


def set_params(model, v):
    return model.with_params(v)


def topology_id(model) -> str:
    if isinstance(model, ClusterModel):
        return model.topology.name
    if isinstance(model, QcnnModel):
        return "qcnn-iris"
    if isinstance(model, CnnModel):
        return "cnn-iris"
    raise TypeError(f"unknown model {type(model).__name__}")


def model_to_json(model) -> str:
    return json.dumps({"topology": topology_id(model), "params": get_params(model).tolist()})


def model_from_json(text: str):
    doc = json.loads(text)
    topo, params = doc["topology"], doc["params"]
    if topo in TOPOLOGIES:
        return ClusterModel(TOPOLOGIES[topo](), params)
    if topo == "qcnn-iris":
        return QcnnModel.from_vector(params)
    if topo == "cnn-iris":
        return CnnModel.zeros().with_params(params)
    raise ValueError(f"unknown topology {topo!r}")
