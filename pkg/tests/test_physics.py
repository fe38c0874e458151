import numpy as np
import pytest

from mbqcnn import physics as P
from mbqcnn.qstate import PAULI_X, PAULI_Z, StateVector

I2 = np.eye(2)


def kron(*ops):
    out = np.ones((1, 1))
    for o in ops:
        out = np.kron(out, o)
    return out


def linear_cluster3():
    plus = np.ones(8) / np.sqrt(8)
    sign = np.array([(-1) ** ((i >> 2 & 1) * (i >> 1 & 1) + (i >> 1 & 1) * (i & 1)) for i in range(8)])
    return StateVector(3, plus * sign)


class TestHamiltonian:
    def test_pure_zxz(self):
        h = P.haldane_hamiltonian(P.HaldaneParams(3, 1, 0, 0))
        assert np.allclose(h, -kron(PAULI_Z, PAULI_X, PAULI_Z).real)
        ev = np.linalg.eigvalsh(h)
        assert np.allclose(ev, [-1] * 4 + [1] * 4)

    def test_free_spins(self):
        h = P.haldane_hamiltonian(P.HaldaneParams(3, 0, 1, 0))
        expected = -(kron(PAULI_X, I2, I2) + kron(I2, PAULI_X, I2) + kron(I2, I2, PAULI_X)).real
        assert np.allclose(h, expected)
        assert np.linalg.eigvalsh(h)[0] == pytest.approx(-3)

    def test_xz_terms(self):
        h = P.haldane_hamiltonian(P.HaldaneParams(3, 0, 0, 1))
        expected = -(kron(PAULI_X, PAULI_Z, I2) + kron(I2, PAULI_X, PAULI_Z)).real
        assert np.allclose(h, expected)

    def test_hermitian(self, rng):
        for _ in range(10):
            n = int(rng.integers(3, 7))
            h = P.haldane_hamiltonian(P.HaldaneParams(n, *rng.normal(size=3)))
            assert np.max(np.abs(h - h.conj().T)) < 1e-12

    def test_sparse_matches_dense(self):
        p = P.HaldaneParams(4, 1.0, 0.3, -0.7)
        assert np.allclose(P.haldane_hamiltonian(p, sparse=True).toarray(), P.haldane_hamiltonian(p))

    def test_site_range(self):
        with pytest.raises(ValueError):
            P.HaldaneParams(2, 1, 0, 0)
        with pytest.raises(ValueError):
            P.HaldaneParams(13, 1, 0, 0)
        with pytest.raises(ValueError):
            P.HaldaneParams(3, np.nan, 0, 0)

    def test_ratios_need_j(self):
        with pytest.raises(ZeroDivisionError):
            _ = P.HaldaneParams(3, 0, 1, 1).ratios


class TestGroundState:
    def test_product_state(self):
        g = P.ground_state(P.HaldaneParams(3, 0, 1, 0))
        assert np.allclose(g.amplitudes, np.ones(8) / np.sqrt(8))

    def test_energy(self):
        p = P.HaldaneParams(3, 1, 0.5, 0)
        g, e = P.ground_state(p, return_energy=True)
        h = P.haldane_hamiltonian(p)
        assert abs(np.vdot(g.amplitudes, h @ g.amplitudes).real - e) < 1e-10
        assert e == pytest.approx(np.linalg.eigvalsh(h)[0], abs=1e-12)

    def test_degenerate_corner_deterministic(self):
        p = P.HaldaneParams(3, 1, 0, 0)
        a, b = P.ground_state(p), P.ground_state(p)
        assert np.array_equal(a.amplitudes, b.amplitudes)
        assert a.norm_sq == pytest.approx(1)

    def test_phase_fixed(self):
        g = P.ground_state(P.HaldaneParams(4, 1, 0.3, 0.2))
        first = g.amplitudes[np.flatnonzero(np.abs(g.amplitudes) > 1e-12)[0]]
        assert first.imag == 0 and first.real > 0


class TestSop:
    def test_zero_state(self):
        assert abs(P.sop_expectation(StateVector.basis(3, 0), 1, 3)) < 1e-12

    def test_plus_state(self):
        assert abs(P.sop_expectation(StateVector(3, np.ones(8) / np.sqrt(8)), 1, 3)) < 1e-12

    def test_cluster_state(self):
        assert P.sop_expectation(linear_cluster3(), 1, 3) == pytest.approx(1, abs=1e-12)

    def test_index_order(self):
        with pytest.raises(ValueError):
            P.sop_expectation(linear_cluster3(), 3, 1)
        with pytest.raises(ValueError):
            P.sop_expectation(linear_cluster3(), 1, 4)

    def test_label_rule(self):
        assert P.sop_label(0.6) == 1 and P.sop_label(-0.6) == 1 and P.sop_label(0.5) == 0


class TestDatasets:
    def test_grid(self):
        data = P.make_grid_dataset(3, 6)
        assert len(data) == 36
        assert sorted({round(s.params.h1, 10) for s in data}) == [0, 0.4, 0.8, 1.2, 1.6, 2.0]
        assert all(abs(s.ground_state.norm_sq - 1) < 1e-12 for s in data)
        assert all(s.label == P.sop_label(s.sop) and abs(s.sop) <= 1 + 1e-12 for s in data)

    def test_test_grid(self):
        train = P.make_grid_dataset(3, 6)
        test = P.make_test_grid(3, 6, seed=3)
        assert len(test) == 4
        train_pts = {(round(s.params.h1, 9), round(s.params.h2, 9)) for s in train}
        assert not any((round(s.params.h1, 9), round(s.params.h2, 9)) in train_pts for s in test)
        again = P.make_test_grid(3, 6, seed=3)
        assert [s.params for s in test] == [s.params for s in again]

    def test_grid_side_check(self):
        with pytest.raises(ValueError):
            P.grid_axes(1)


class TestBoundary:
    def _grid(self, f):
        h1, h2 = P.grid_axes(12)
        return P.PhaseGrid(h1, h2, np.array([[f(b) for b in h2] for _ in h1]))

    def test_linear_profile(self):
        assert P.phase_boundary(self._grid(lambda b: 3 * b + 1)) == []

    def test_step_profile(self):
        grid = self._grid(lambda b: 1.0 if b > 0.5 else 0.0)
        pts = P.phase_boundary(grid)
        step = grid.h2_over_j[np.argmax(grid.h2_over_j > 0.5)]
        prev = grid.h2_over_j[np.argmax(grid.h2_over_j > 0.5) - 1]
        assert pts and all(p[1] in (prev, step) for p in pts)

    def test_small_grid(self):
        with pytest.raises(ValueError):
            P.phase_boundary(P.PhaseGrid([0, 1], [0, 1], np.zeros((2, 2))))

    def test_shape_check(self):
        with pytest.raises(ValueError):
            P.PhaseGrid([0, 1], [0, 1, 2], np.zeros((2, 2)))

    def test_agreement(self):
        frac, worst = P.boundary_agreement([(0, 0.1), (1, 0.9)], [(0, 0.0), (1, 0.0)], 0.2)
        assert frac == 0.5 and worst == pytest.approx(0.9)
        assert P.boundary_agreement([], [(0, 0)], 0.1) == (0.0, float("inf"))


class TestExport:
    def test_csv_and_amplitudes(self, tmp_path):
        data = P.make_grid_dataset(3, 2)
        P.write_dataset(data, tmp_path / "d.csv", tmp_path / "amps", "hash")
        lines = (tmp_path / "d.csv").read_text().splitlines()
        assert lines[0] == "# hash" and lines[1] == "h1_over_j,h2_over_j,sop,label"
        assert len(lines) == 2 + 4
        back = P.read_amplitudes(tmp_path / "amps" / "sample_0001.bin")
        assert np.array_equal(back.amplitudes, data[1].ground_state.amplitudes)
        assert (tmp_path / "amps" / "sample_0000.bin").stat().st_size == 8 * 2 * 8
