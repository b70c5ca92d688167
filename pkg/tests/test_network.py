import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patcharray.microstrip import (
    C0,
    InvalidInputError,
    LineParams,
    MicrostripLine,
    PatchElement,
    Substrate,
    characteristic_impedance,
)
from patcharray.network import (
    ArrayLayout,
    Band,
    NetworkResult,
    ResonantSingularityError,
    abcd_line,
    abcd_shunt,
    analyze_sweep,
    build_chain,
    cascade,
    element_excitations,
    extract_bandwidth,
    identity,
    input_impedance,
    network_response,
    reflection,
    slot_admittance,
)


def lossless(z0, eps_eff=1.0):
    return LineParams(z0, eps_eff)


def wavelength(f, eps_eff=1.0):
    return C0 / f / math.sqrt(eps_eff)


class TestLine:
    def test_zero_length_is_identity(self):
        m = abcd_line(LineParams(77.0, 2.3, 1.0, 2.0), 0.0, 28e9).m
        assert np.array_equal(m, identity().m)

    def test_quarter_wave_transformer(self):
        f = 10e9
        chain = abcd_line(lossless(100.0, 2.0), wavelength(f, 2.0) / 4, f)
        assert input_impedance(chain, 50.0) == pytest.approx(200.0, abs=1e-9)

    @pytest.mark.parametrize("zl", [50.0, 13.0 - 40j, 300 + 7j])
    def test_half_wave_repeats_load(self, zl):
        f = 10e9
        chain = abcd_line(lossless(73.0, 3.1), wavelength(f, 3.1) / 2, f)
        assert abs(input_impedance(chain, zl) - zl) < 1e-9 * max(1, abs(zl))

    @given(z0=st.floats(5, 300), length=st.floats(0, 0.05), alpha=st.floats(0, 50))
    def test_unit_determinant(self, z0, length, alpha):
        m = abcd_line(LineParams(z0, 2.2, alpha, 0.0), length, 28e9)
        assert abs(m.det - 1) < 1e-9

    def test_negative_length_rejected(self):
        with pytest.raises(InvalidInputError):
            abcd_line(lossless(50), -1e-3, 1e9)


class TestShunt:
    def test_zero_is_identity(self):
        assert np.array_equal(abcd_shunt(0).m, identity().m)

    def test_parallel_admittances_add(self):
        a = cascade([abcd_shunt(0.01 + 0.002j), abcd_shunt(0.03 - 0.01j)]).m
        assert np.allclose(a, abcd_shunt(0.04 - 0.008j).m, rtol=0, atol=1e-15)

    def test_open_load(self):
        assert input_impedance(abcd_shunt(1 / 100)) == pytest.approx(100.0)

    def test_exact_determinant(self):
        assert abcd_shunt(3.7 - 2j).det == 1

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInputError):
            abcd_shunt(complex("nan"))


def _random_two_port(seed):
    rng = np.random.default_rng(seed)
    z0, length = rng.uniform(20, 150), rng.uniform(0, 5e-3)
    return cascade([abcd_shunt(rng.normal() * 0.01 + 1j * rng.normal() * 0.01),
                    abcd_line(LineParams(z0, 2.0, rng.uniform(0, 5), 0.0), length, 28e9)])


class TestCascade:
    def test_single(self):
        a = _random_two_port(1)
        assert cascade([a]) is a

    def test_identity(self):
        a = _random_two_port(2)
        assert np.array_equal(cascade([a, identity()]).m, a.m)

    @given(st.integers(0, 10_000))
    def test_associative(self, seed):
        a, b, c = (_random_two_port(seed + k) for k in range(3))
        left = cascade([cascade([a, b]), c]).m
        right = cascade([a, cascade([b, c])]).m
        assert np.max(np.abs(left - right)) < 1e-12 * max(1, np.max(np.abs(left)))

    def test_determinant_multiplies(self):
        a, b = _random_two_port(5), _random_two_port(6)
        assert cascade([a, b]).det == pytest.approx(a.det * b.det, rel=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            cascade([])


class TestChain:
    def test_single_patch_structure(self, paper_substrate, paper_patch):
        lay = ArrayLayout.uniform(paper_substrate, MicrostripLine(0.5e-3, 1.5e-3), paper_patch, 1,
                                  MicrostripLine(0.5e-3, 1.9e-3))
        ch = build_chain(lay, 28e9)
        assert len(ch.stages) == 4
        assert np.allclose(cascade(ch.stages).m, ch.abcd.m, rtol=1e-14, atol=0)
        assert np.array_equal(ch.stages[1].m, ch.stages[3].m)

    def test_paper_chain_count_and_reciprocity(self, paper_layout):
        ch = build_chain(paper_layout, 28e9)
        assert len(ch.stages) == 1 + 6 * 3 + 5 == 24
        assert len(ch.slot_nodes) == 12
        assert abs(ch.abcd.det - 1) < 1e-6
        for s in ch.stages:
            assert abs(s.det - 1) < 1e-9

    def test_sweep_determinants(self, paper_layout):
        ch = build_chain(paper_layout, np.linspace(25e9, 35e9, 41))
        assert np.max(np.abs(ch.abcd.det - 1)) < 1e-6


class TestInputImpedance:
    def test_identity(self):
        assert input_impedance(identity(), 50.0) == 50.0

    def test_singular(self):
        with pytest.raises(ResonantSingularityError, match="GHz"):
            input_impedance(identity(), None, freq=28e9)


class TestReflection:
    def test_matched(self):
        r = reflection(50.0)
        assert r.gamma == 0 and r.vswr == 1.0 and r.s11_db == -math.inf

    @pytest.mark.parametrize("zin", [100.0, 25.0])
    def test_vswr_two(self, zin):
        r = reflection(zin)
        assert abs(r.gamma) == pytest.approx(1 / 3, rel=1e-15)
        assert r.vswr == pytest.approx(2.0, rel=1e-15)

    def test_total_reflection(self):
        r = reflection(37j)
        assert abs(r.gamma) == pytest.approx(1.0) and r.vswr == math.inf

    def test_singular(self):
        with pytest.raises(ResonantSingularityError):
            reflection(-50.0)


class TestSweep:
    def test_paper_resonance_window(self, paper_layout):
        res = analyze_sweep(paper_layout, 25e9, 35e9, 401)
        assert len(res) == 401
        f_res, _ = res.resonance()
        assert 27e9 <= f_res <= 30.5e9

    def test_two_points(self, paper_layout):
        res = analyze_sweep(paper_layout, 25e9, 35e9, 2)
        assert list(res.freqs) == [25e9, 35e9]

    def test_uniform_spacing(self, paper_layout):
        res = analyze_sweep(paper_layout, 25e9, 35e9, 11)
        assert np.allclose(np.diff(res.freqs), 1e9, rtol=1e-12)

    def test_bad_arguments(self, paper_layout):
        with pytest.raises(InvalidInputError):
            analyze_sweep(paper_layout, 35e9, 25e9, 11)
        with pytest.raises(InvalidInputError):
            analyze_sweep(paper_layout, 25e9, 35e9, 1)

    def test_lossless_passive(self, lossless_substrate, paper_patch):
        lay = ArrayLayout.uniform(lossless_substrate, MicrostripLine(0.5e-3, 1.5e-3), paper_patch,
                                  6, MicrostripLine(0.5e-3, 1.9e-3))
        res = analyze_sweep(lay, 25e9, 35e9, 401)
        assert np.all(np.abs(res.s11) <= 1 + 1e-12)
        assert np.all(res.vswr >= 1)

    def test_lossy_passive(self, paper_layout):
        res = analyze_sweep(paper_layout, 20e9, 40e9, 801)
        assert np.all(res.zin.real >= 0)
        assert np.all(np.abs(res.s11) <= 1)

    def test_point_independence(self, paper_layout):
        res = analyze_sweep(paper_layout, 25e9, 35e9, 21)
        for i in (0, 7, 20):
            one = network_response(paper_layout, [res.freqs[i]])
            assert one.s11[0] == pytest.approx(res.s11[i], abs=1e-13)

    def test_zero_gap_is_identity_insertion(self, paper_substrate, paper_patch):
        lay = ArrayLayout.uniform(paper_substrate, MicrostripLine(0.5e-3, 1.5e-3), paper_patch, 6,
                                  MicrostripLine(0.5e-3, 0.0))
        fs = np.linspace(25e9, 35e9, 11)
        ch = build_chain(lay, fs)
        # stage layout: feed, then [slot, body, slot, interconnect] * 5, [slot, body, slot]
        kept = [s for i, s in enumerate(ch.stages) if not (i >= 4 and (i - 4) % 4 == 0)]
        assert len(kept) == 19
        z_full = input_impedance(ch.abcd)
        z_removed = input_impedance(cascade(kept))
        s_full = reflection(z_full).gamma
        s_removed = reflection(z_removed).gamma
        assert np.max(np.abs(s_full - s_removed)) < 1e-12

    def test_closed_form_slot_model_runs(self, paper_layout):
        res = analyze_sweep(paper_layout.replace(slot_model="closed_form"), 25e9, 35e9, 41)
        assert np.all(np.isfinite(res.s11))


def _trace(freqs_ghz, db):
    f = np.asarray(freqs_ghz) * 1e9
    s = 10 ** (np.asarray(db) / 20) + 0j
    return NetworkResult(f, s, 50 * (1 + s) / (1 - s), (1 + abs(s)) / (1 - abs(s)))


class TestBandwidth:
    def test_constant_above(self):
        f = np.linspace(25, 35, 101)
        assert extract_bandwidth(_trace(f, np.full_like(f, -5.0)), -10, 28e9).empty

    def test_constant_below(self):
        f = np.linspace(25, 35, 101)
        band = extract_bandwidth(_trace(f, np.full_like(f, -15.0)), -10, 28e9)
        assert (band.f_low, band.f_high) == (25e9, 35e9)

    def test_parabola(self):
        f = np.linspace(25, 35, 401)
        step = (f[1] - f[0]) * 1e9
        band = extract_bandwidth(_trace(f, -20 + 40 * ((f - 28) / 2) ** 2), -10, 28e9)
        # analytic roots 28 +- 1 GHz
        assert abs(band.f_low - 27e9) < step
        assert abs(band.f_high - 29e9) < step

    def test_default_center_is_resonance(self):
        f = np.linspace(25, 35, 401)
        band = extract_bandwidth(_trace(f, -20 + 40 * ((f - 30) / 2) ** 2))
        assert band.f_low == pytest.approx(29e9, abs=25e6)

    @settings(max_examples=50)
    @given(center=st.floats(25.5, 34.5), depth=st.floats(-40, -11), width=st.floats(0.2, 5))
    def test_containment(self, center, depth, width):
        f = np.linspace(25, 35, 201)
        db = np.minimum(depth + (-10 - depth) * ((f - center) / width) ** 2, -0.1)
        res = _trace(f, db)
        band = extract_bandwidth(res, -10, center * 1e9)
        fc_db = np.interp(center * 1e9, res.freqs, res.s11_db)
        if not band.empty:
            assert fc_db <= -10
            assert band.f_low <= center * 1e9 <= band.f_high

    def test_band_type(self):
        assert Band().empty and Band().width == 0.0


def nodal_slot_voltages(layout, freq, z_source=50.0):
    """Solve the same circuit by nodal analysis (independent of ABCD propagation)."""
    sub = layout.substrate
    segments = [(layout.feed, None)]
    n = layout.n_elements
    # nodes: 0 = port, then one node per line end
    lines = []  # (node_a, node_b, width, length)
    shunts = {}
    node = 0
    lines.append((node, node + 1, layout.feed.width, layout.feed.length))
    node += 1
    slot_nodes = []
    for k, p in enumerate(layout.patches):
        y = slot_admittance(p, sub, freq, layout.slot_model)
        shunts[node] = shunts.get(node, 0) + y
        slot_nodes.append(node)
        lines.append((node, node + 1, p.width, p.length))
        node += 1
        shunts[node] = shunts.get(node, 0) + y
        slot_nodes.append(node)
        if k < n - 1:
            ic = layout.interconnects[k]
            lines.append((node, node + 1, ic.width, ic.length))
            node += 1
    size = node + 1
    Y = np.zeros((size, size), dtype=complex)
    for a, b, w, length in lines:
        p = characteristic_impedance(w, sub, freq)
        gamma = p.alpha_d + p.alpha_c + 1j * 2 * np.pi * freq * np.sqrt(p.eps_eff) / C0
        gl = gamma * length
        yself = 1 / (p.z0 * np.tanh(gl))
        ymut = -1 / (p.z0 * np.sinh(gl))
        Y[a, a] += yself
        Y[b, b] += yself
        Y[a, b] += ymut
        Y[b, a] += ymut
    for k, y in shunts.items():
        Y[k, k] += y
    Y[0, 0] += 1 / z_source
    I = np.zeros(size, dtype=complex)
    I[0] = 1 / z_source
    V = np.linalg.solve(Y, I)
    return V[slot_nodes].reshape(-1, 2)


class TestExcitations:
    def test_matches_nodal_oracle(self, paper_layout):
        for f in (26e9, 27.85e9, 31e9):
            ex = element_excitations(paper_layout, f)
            v = nodal_slot_voltages(paper_layout, f)
            assert np.allclose(ex.slot_voltages, v, rtol=1e-9, atol=1e-12)

    def test_single_patch_amplitude(self, paper_substrate, paper_patch):
        lay = ArrayLayout.uniform(paper_substrate, MicrostripLine(0.5e-3, 1.5e-3), paper_patch, 1,
                                  MicrostripLine(0.5e-3, 1.9e-3))
        ex = element_excitations(lay, 28e9)
        assert len(ex) == 1
        v1, v2 = ex.slot_voltages[0]
        assert ex.amplitudes[0] == (v1 - v2) / 2

    def test_symmetric_single_patch(self, lossless_substrate, paper_patch):
        lay = ArrayLayout.uniform(lossless_substrate, MicrostripLine(0.5e-3, 0.0), paper_patch, 1,
                                  MicrostripLine(0.5e-3, 1.9e-3))
        v1, v2 = element_excitations(lay, 28e9).slot_voltages[0]
        # lossless line between two equal admittances with an open far end:
        # power into the far slot equals the power it radiates
        assert abs(v1) > 0
        ratio = abs(v2) / abs(v1)
        assert ratio == pytest.approx(1.0, abs=0.02)

    def test_paper_taper_monotone(self, paper_layout):
        f_res, _ = analyze_sweep(paper_layout, 25e9, 35e9, 401).resonance()
        ex = element_excitations(paper_layout, f_res)
        v = nodal_slot_voltages(paper_layout, f_res)
        oracle = np.abs((v[:, 0] - v[:, 1]) / 2)
        assert np.all(np.diff(oracle) < 0)
        assert np.allclose(np.abs(ex.amplitudes), oracle, rtol=1e-9)
        assert np.all(np.isfinite(ex.amplitudes))

    def test_scaled(self, paper_layout):
        ex = element_excitations(paper_layout, 28e9)
        s = ex.scaled(2j)
        assert np.allclose(s.amplitudes, 2j * ex.amplitudes)


class TestLayout:
    def test_counts_validated(self, paper_substrate, paper_patch):
        with pytest.raises(InvalidInputError):
            ArrayLayout(paper_substrate, MicrostripLine(1e-3, 1e-3), (paper_patch,) * 3,
                        (MicrostripLine(1e-3, 1e-3),))

    def test_positions(self, paper_layout, paper_patch):
        x = paper_layout.element_positions()
        assert x[0] == pytest.approx(paper_patch.length / 2)
        assert np.allclose(np.diff(x), paper_patch.length + 1.9e-3, rtol=1e-12)
        assert np.allclose(np.diff(paper_layout.replace(pitch=5e-3).element_positions()), 5e-3)
