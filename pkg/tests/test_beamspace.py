import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ucya.array import UCyAGeometry, full_steering, horizontal_steering
from ucya.beamspace import (BeamformerSet, beam_pattern, beamspace_response, bessel_j,
                            default_p_max, design_beamformers, jacobi_anger_response,
                            qdft_matrix, ring_argument, suppressed_bin_ratio, sweep_directions)

F0 = 28e9


def ring(m_h, m_v=8):
    return UCyAGeometry.in_wavelengths(m_v, m_h, F0)


class TestBessel:
    def test_known_values(self):
        assert bessel_j(0, 0.0) == 1.0
        assert bessel_j(3, 0.0) == 0.0
        assert abs(bessel_j(0, 2.404825557695773)) < 1e-14

    def test_negative_order_symmetry(self):
        x = np.linspace(0, 15, 31)
        for p in range(1, 8):
            np.testing.assert_allclose(bessel_j(-p, x), (-1) ** p * bessel_j(p, x), atol=1e-15)

    def test_mpmath_oracle(self):
        for p in range(-14, 15):
            for x in (0.1, 1.5, 6.0, 12.566):
                want = float(mpmath.besselj(p, x))
                assert abs(bessel_j(p, x) - want) < 1e-13

    def test_small_argument_decay(self):
        assert 0.015 < bessel_j(3, 1.5) < 0.07
        assert 1e-4 < bessel_j(6, 1.5) < 5e-4

    def test_rejects_fractional_order(self):
        with pytest.raises(ValueError):
            bessel_j(0.5, 1.0)


class TestQdft:
    def test_default_order_at_desk(self):
        assert default_p_max(ring(25), F0) == 12

    def test_orthogonal_columns(self):
        b = qdft_matrix(36, 12)
        np.testing.assert_allclose(b.conj().T @ b, 36 * np.eye(25), atol=1e-11)

    def test_entry_oracle(self):
        b = qdft_matrix(25, 12)
        for m in (0, 3, 24):
            for p in (-12, 0, 5):
                assert abs(b[m, p + 12] - np.exp(-2j * np.pi * m * p / 25)) < 1e-13

    def test_rejects_aliasing(self):
        with pytest.raises(ValueError):
            qdft_matrix(24, 12)


class TestResponse:
    def test_endfire_concentrates_in_zero_mode(self):
        geo = ring(36)
        r = beamspace_response(0.0, 0.3, F0, geo, 12)
        want = np.zeros(25, dtype=complex)
        want[12] = 6.0
        np.testing.assert_allclose(r, want, atol=1e-15)

    def test_matches_exact_product_large_ring(self, rng):
        geo = ring(36)
        b = qdft_matrix(36, 12)
        for _ in range(10):
            th, ph = rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi)
            exact = b.conj().T @ horizontal_steering(th, ph, F0, geo)
            approx = beamspace_response(th, ph, F0, geo, 12)
            assert np.linalg.norm(approx - exact) / np.linalg.norm(exact) < 1e-2

    def test_sign_of_azimuth_phase(self):
        # the p = 1 entry advances with +phi
        geo = ring(48)
        b = qdft_matrix(48, 12)
        r0 = b.conj().T @ horizontal_steering(1.0, 0.0, F0, geo)
        r1 = b.conj().T @ horizontal_steering(1.0, 0.2, F0, geo)
        assert abs(np.angle(r1[13] / r0[13]) - 0.2) < 1e-8

    def test_rejects_small_ring(self):
        with pytest.raises(ValueError):
            beamspace_response(1.0, 0.0, F0, ring(20), 9)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, np.pi), st.floats(0, 2 * np.pi), st.sampled_from([25, 36, 48]))
    def test_jacobi_anger_series_is_exact(self, th, ph, m_h):
        geo = ring(m_h)
        b = qdft_matrix(m_h, 12)
        exact = b.conj().T @ horizontal_steering(th, ph, F0, geo)
        main, resid = jacobi_anger_response(th, ph, F0, geo, 12)
        assert np.linalg.norm(main + resid - exact) < 1e-8
        np.testing.assert_allclose(main, beamspace_response(th, ph, F0, geo, 12), atol=1e-12)

    def test_residual_shrinks_with_ring_size(self):
        ratios = []
        for m_h in (25, 36, 48):
            geo = ring(m_h)
            worst = 0.0
            for th in np.linspace(0.1, np.pi / 2, 9):
                main, resid = jacobi_anger_response(th, 0.7, F0, geo, 12)
                worst = max(worst, np.linalg.norm(resid) / np.linalg.norm(main))
            ratios.append(worst)
        assert ratios[0] > ratios[1] > ratios[2]
        assert ratios[2] < 1e-12


class TestSuppressedBins:
    def test_none_at_critical_ring(self):
        assert suppressed_bin_ratio(1.0, 0.4, F0, ring(25), 12) == (0.0, 0)

    def test_small_away_from_broadside(self):
        geo = ring(48)
        for th in np.linspace(0.05, np.pi / 6, 8):
            for ph in (0.0, 1.0, 2.5):
                ratio, n = suppressed_bin_ratio(th, ph, F0, geo, 12)
                assert n == 23
                assert ratio < 0.05

    def test_large_near_broadside(self):
        # near broadside the ring argument reaches P and the |p| = P+1 mode is
        # of the same size as the kept ones
        ratio, _ = suppressed_bin_ratio(np.pi / 2, 0.0, F0, ring(48), 12)
        assert ratio > 0.05


class TestDigitalWeights:
    def test_vertical_pattern_peaks_at_sweep_direction(self, cfg, geo):
        bf = design_beamformers(cfg, geo)
        grid = np.linspace(0, np.pi, 2001)
        for mb, th in enumerate(sweep_directions(cfg.m_b)):
            pat = beam_pattern(grid, cfg.reference_index, mb, bf, cfg, geo)
            assert abs(grid[np.argmax(pat)] - th) < 2e-3
            assert np.isclose(pat.max(), 1.0, atol=1e-6)

    def test_unit_norm(self, cfg, geo):
        bf = design_beamformers(cfg, geo)
        np.testing.assert_allclose(np.linalg.norm(bf.b_vdb, axis=-1), 1.0)
        np.testing.assert_allclose(np.linalg.norm(bf.b_hdb, axis=-1), 1.0)

    def test_single_beam_points_broadside(self):
        assert sweep_directions(1)[0] == np.pi / 2

    def test_offsets_invert_weights(self, cfg, geo):
        bf = design_beamformers(cfg, geo)
        np.testing.assert_allclose(bf.vertical_offset(2, 1) * bf.b_vdb[2, 1].conj(), 1.0)
        np.testing.assert_allclose(bf.horizontal_offset(2, 1) * bf.b_hdb[2, 1].conj(), 1.0)

    def test_rejects_zero_weight(self, geo):
        w = np.ones((2, 1, 8), dtype=complex)
        w[0, 0, 3] = 0
        with pytest.raises(ValueError):
            BeamformerSet(qdft_matrix(25, 12), 12, w, np.ones((2, 1, 25), dtype=complex))


class TestHybrid:
    def test_dimensions(self, cfg, geo):
        bf = design_beamformers(cfg, geo)
        assert bf.m_hd == 25
        assert bf.m_bsr == geo.m_v * 25
        assert bf.m_bsd == bf.m_bsr

    def test_kron_factored_matches_full_matrix(self, cfg, geo, rng):
        bf = design_beamformers(cfg, geo)
        a = rng.standard_normal((3, geo.n_antennas)) + 1j * rng.standard_normal((3, geo.n_antennas))
        for mf, mb in ((0, 0), (5, 3)):
            want = a @ bf.full_matrix(mf, mb).conj()
            np.testing.assert_allclose(bf.combine(a, mf, mb), want, atol=1e-12)

    def test_full_matrix_factorizes(self, cfg, geo):
        bf = design_beamformers(cfg, geo)
        np.testing.assert_allclose(bf.full_matrix(1, 2),
                                   bf.analog_matrix() @ bf.digital_matrix(1, 2), atol=1e-13)

    def test_steering_through_hybrid(self, cfg, geo):
        bf = design_beamformers(cfg, geo)
        th, ph = 1.0, 0.5
        f = cfg.frequencies[cfg.reference_index]
        x = bf.combine(full_steering(th, ph, f, geo), cfg.reference_index, 1)
        assert x.shape == (bf.m_bsd,)
        # phase mode amplitudes follow the Bessel magnitudes
        mag = np.abs(x.reshape(geo.m_v, 25)).sum(axis=0)
        j = np.abs(bessel_j(np.arange(-12, 13), ring_argument(th, f, geo)))
        assert np.corrcoef(mag, j)[0, 1] > 0.9

    def test_rejects_wrong_input_length(self, cfg, geo):
        bf = design_beamformers(cfg, geo)
        with pytest.raises(ValueError):
            bf.combine(np.ones(10), 0, 0)
