"""Tests for constellations, pilots, precoding, and frame assembly."""

import numpy as np
import pytest

from ddstlink.numerics import RngStream
from ddstlink.phy import (
    DdstParams,
    assemble_frame,
    build_pilot_matrix,
    ddst_matrix,
    ddst_precode,
    demap_hard,
    map_bits,
    plan_fullddst,
    plan_mix,
    plan_op,
    power_factor,
    qam_constellation,
)


class TestPilotMatrix:
    def test_last_row_all_ones(self):
        p = build_pilot_matrix(4, 28)
        np.testing.assert_allclose(p[3], np.ones(28), atol=1e-12)

    @pytest.mark.parametrize("n_t,t_len", [(2, 8), (4, 28), (4, 56)])
    def test_orthogonality(self, n_t, t_len):
        p = build_pilot_matrix(n_t, t_len)
        np.testing.assert_allclose(p @ p.conj().T, t_len * np.eye(n_t), atol=1e-10)

    def test_distinct_rows_orthogonal(self):
        p = build_pilot_matrix(4, 28)
        for a in range(4):
            for b in range(a + 1, 4):
                assert abs(np.vdot(p[a], p[b])) < 1e-10

    def test_indivisible_length(self):
        with pytest.raises(ValueError):
            build_pilot_matrix(4, 30)


class TestDdstMatrix:
    def test_small_case(self):
        expected = 0.5 * np.array(
            [[1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1]], dtype=float
        )
        np.testing.assert_allclose(ddst_matrix(4, 2), expected)

    def test_idempotent(self):
        j = ddst_matrix(28, 4)
        np.testing.assert_allclose(j @ j, j, atol=1e-12)

    def test_trace_is_cycle(self):
        assert abs(np.trace(ddst_matrix(28, 4)) - 4) < 1e-12

    def test_eigenvalues_binary_rank(self):
        j = ddst_matrix(28, 4)
        eigs = np.linalg.eigvalsh(j)
        assert np.all((np.abs(eigs) < 1e-10) | (np.abs(eigs - 1) < 1e-10))
        assert int(round(eigs.sum())) == 4

    def test_divisibility_error(self):
        with pytest.raises(ValueError):
            ddst_matrix(10, 4)


class TestPrecode:
    def setup_method(self):
        self.j = ddst_matrix(28, 4)
        self.rng = np.random.default_rng(0)

    def test_constant_row_cancels(self):
        d = np.ones((1, 28), dtype=complex)
        precoded, pert = ddst_precode(d, self.j)
        np.testing.assert_allclose(precoded, 0, atol=1e-12)
        np.testing.assert_allclose(pert, d, atol=1e-12)

    def test_orthogonal_to_pilots(self):
        p = build_pilot_matrix(4, 28)
        d = self.rng.normal(size=(4, 28)) + 1j * self.rng.normal(size=(4, 28))
        precoded, _ = ddst_precode(d, self.j)
        assert np.abs(precoded @ p.conj().T).max() < 1e-10

    def test_perturbation_periodicity(self):
        d = self.rng.normal(size=(4, 28)) + 1j * self.rng.normal(size=(4, 28))
        _, pert = ddst_precode(d, self.j)
        np.testing.assert_allclose(pert[:, :-4], pert[:, 4:], atol=1e-12)

    def test_energy_ratio(self):
        # E||precoded||^2 / E||data||^2 = 1 - 1/P over 10^4 data matrices
        rng = np.random.default_rng(0)
        d = (rng.normal(size=(10_000, 4, 28)) + 1j * rng.normal(size=(10_000, 4, 28))) / np.sqrt(2)
        precoded = d - d @ self.j
        ratio = np.sum(np.abs(precoded) ** 2) / np.sum(np.abs(d) ** 2)
        assert abs(ratio - (1 - 1 / 7)) < 0.01


class TestPowerFactor:
    def test_exact_cancellation(self):
        assert abs(power_factor(1 / 7, 7) - 1.0) < 1e-14

    def test_reference_value(self):
        assert abs(power_factor(0.3, 7) - 0.9036961141150639) < 1e-12

    def test_limit_toward_one(self):
        assert power_factor(1 - 1e-9, 7) < 1e-4

    @pytest.mark.parametrize("rho", [0.0, 1.0, -0.1, 1.5])
    def test_domain(self, rho):
        with pytest.raises(ValueError):
            power_factor(rho, 7)

    def test_single_block_rejected(self):
        with pytest.raises(ValueError):
            power_factor(0.5, 1)


class TestMapping:
    def test_16qam_corner(self):
        c = qam_constellation(16)
        np.testing.assert_allclose(
            map_bits(np.array([0, 0, 0, 0]), c), [(-3 - 3j) / np.sqrt(10)], atol=1e-12
        )

    def test_qpsk_magnitudes(self):
        c = qam_constellation(4)
        sym = map_bits(np.array([0, 0, 0, 1, 1, 0, 1, 1]), c)
        np.testing.assert_allclose(np.abs(sym), np.ones(4), atol=1e-12)

    @pytest.mark.parametrize("order", [4, 16])
    def test_roundtrip(self, order):
        c = qam_constellation(order)
        rng = np.random.default_rng(order)
        bits = rng.integers(0, 2, size=240)
        sym = map_bits(bits, c)
        back = demap_hard(sym, c).reshape(-1)
        np.testing.assert_array_equal(back, bits)

    def test_unit_power(self):
        for order in (4, 16):
            c = qam_constellation(order)
            assert abs(np.mean(np.abs(c.points) ** 2) - 1.0) < 1e-12

    def test_gray_adjacency(self):
        # nearest horizontal/vertical neighbors differ in exactly one bit
        c = qam_constellation(16)
        labels = c.labels()
        step = 2 / np.sqrt(10)
        for i in range(16):
            for j in range(16):
                d = c.points[i] - c.points[j]
                if abs(abs(d) - step) < 1e-9:
                    assert (labels[i] != labels[j]).sum() == 1

    def test_length_error(self):
        with pytest.raises(ValueError):
            map_bits(np.array([0, 1, 0]), qam_constellation(16))


class TestPlans:
    def test_mix_quarter(self):
        plan = plan_mix(72, 28, 4, 0.3, 0.25)
        assert plan.ddst_subcarriers.size == 18
        assert plan.pure_data_subcarriers.size == 54
        assert plan.data_capacity_per_antenna() == 72 * 28

    def test_mix_partition(self):
        plan = plan_mix(72, 28, 4, 0.3, 0.5)
        both = np.concatenate([plan.ddst_subcarriers, plan.pure_data_subcarriers])
        np.testing.assert_array_equal(np.sort(both), np.arange(72))

    def test_mix_bad_ratio(self):
        with pytest.raises(ValueError):
            plan_mix(72, 28, 4, 0.3, 1 / 5)  # 72/5 not integer

    def test_mix_custom_placement(self):
        subs = np.array([1, 5, 9, 13, 17, 21, 25, 29, 33, 37, 41, 45, 49, 53, 57, 61, 65, 69])
        plan = plan_mix(72, 28, 4, 0.3, 0.25, subcarriers=subs)
        np.testing.assert_array_equal(plan.ddst_subcarriers, subs)
        assert plan.pure_data_subcarriers.size == 54

    def test_mix_custom_placement_count_mismatch(self):
        with pytest.raises(ValueError):
            plan_mix(72, 28, 4, 0.3, 0.25, subcarriers=np.array([0, 4]))

    def test_op_tdm_symbols(self):
        plan = plan_op(72, 28, 4, "tdm", tp=4)
        assert plan.op_pilot_symbols.tolist() == [0, 1, 2, 3]
        assert plan.data_capacity_per_antenna() == 72 * 24

    def test_op_comb_positions(self):
        plan = plan_op(72, 28, 4, "2p")
        assert plan.op_pilot_symbols.tolist() == [2, 11, 16, 25]
        assert plan.data_fraction() == pytest.approx(12 / 14)
        one_p = plan_op(72, 28, 4, "1p")
        assert one_p.op_pilot_symbols.tolist() == [2, 16]

    def test_comb_covers_all_antennas(self):
        plan = plan_op(72, 28, 4, "2p")
        comb = plan.op_comb_mask()
        assert (comb.sum(axis=1) == 1).all()
        assert (comb.sum(axis=0) == 18).all()


class TestAssemble:
    def _payload(self, plan, constellation, seed=0):
        rng = np.random.default_rng(seed)
        cap = plan.data_capacity_per_antenna()
        bits = rng.integers(0, 2, size=(plan.n_t, cap * constellation.bits_per_symbol))
        return np.stack([map_bits(b, constellation) for b in bits])

    def test_capacity_mismatch(self):
        plan = plan_fullddst(8, 8, 2, 0.3)
        ddst = DdstParams.create(0.3, 2, 8)
        pilots = build_pilot_matrix(2, 8)
        with pytest.raises(ValueError):
            assemble_frame(np.zeros((2, 5), complex), plan, ddst, pilots)

    def test_fullddst_average_power(self):
        c = qam_constellation(16)
        pilots = build_pilot_matrix(4, 28)
        for rho in (1 / 7, 0.3):
            plan = plan_fullddst(72, 28, 4, rho)
            ddst = DdstParams.create(rho, 4, 28)
            total = 0.0
            count = 0
            for seed in range(50):
                frame = assemble_frame(self._payload(plan, c, seed), plan, ddst, pilots)
                total += np.sum(np.abs(frame.grid) ** 2)
                count += frame.grid.size
            assert abs(total / count - 1.0) < 0.02

    def test_mix_pure_data_passthrough(self):
        c = qam_constellation(4)
        plan = plan_mix(72, 28, 4, 0.3, 0.25)
        ddst = DdstParams.create(0.3, 4, 28)
        pilots = build_pilot_matrix(4, 28)
        payload = self._payload(plan, c)
        frame = assemble_frame(payload, plan, ddst, pilots)
        k2 = plan.pure_data_subcarriers
        np.testing.assert_allclose(
            frame.grid[k2], np.transpose(frame.data[k2], (0, 2, 1)), atol=1e-12
        )

    def test_frame_reconstruction_on_ddst_res(self):
        # decomposing the grid with known pilots and scaling recovers the
        # precoded data exactly
        c = qam_constellation(16)
        plan = plan_fullddst(12, 28, 4, 0.3)
        ddst = DdstParams.create(0.3, 4, 28)
        pilots = build_pilot_matrix(4, 28)
        payload = self._payload(plan, c)
        frame = assemble_frame(payload, plan, ddst, pilots)
        grid_nt = np.transpose(frame.grid, (0, 2, 1))  # (K, N_t, T)
        recovered = (grid_nt - np.sqrt(0.3) * pilots[None]) / ddst.alpha
        expected = frame.data - frame.perturbation
        np.testing.assert_allclose(recovered, expected, atol=1e-10)

    def test_op_tdm_pilot_symbols(self):
        c = qam_constellation(16)
        plan = plan_op(72, 28, 4, "tdm", tp=4)
        pilots = build_pilot_matrix(4, 28)
        frame = assemble_frame(self._payload(plan, c), plan, None, pilots)
        # exactly 4 of 28 symbols carry pilots; they reuse the training rows
        for t in range(4):
            np.testing.assert_allclose(frame.grid[:, t, :], np.broadcast_to(pilots[:, t], (72, 4)))
        assert frame.perturbation.max() == 0

    def test_op_comb_zeroes_off_comb(self):
        c = qam_constellation(4)
        plan = plan_op(72, 28, 4, "1p")
        pilots = build_pilot_matrix(4, 28)
        frame = assemble_frame(self._payload(plan, c), plan, None, pilots)
        comb = plan.op_comb_mask()
        for t in plan.op_pilot_symbols:
            np.testing.assert_allclose(frame.grid[:, t, :], comb.astype(complex))
