import math

import numpy as np
import pytest
from scipy.special import comb

from squeezesim import ed_oracle as ed
from squeezesim.exact_collective import (
    DickeState,
    cat_time,
    css_dicke,
    dephase_dicke,
    dicke_moments,
    evolve_oat,
    ising_correlators,
)
from squeezesim.moments import MomentTable
from squeezesim.observables import (
    KGrid,
    QGrid,
    align_cat,
    equatorial_peaks,
    ghz_fidelity,
    husimi_q,
    jackknife_error,
    magnetization_histogram,
    measured_ghz_fidelity,
    parity,
    parity_scan,
    pulse,
    ramsey_mse,
    spin_wave_occupations,
    squeezing_wineland,
    total_spin,
    transverse_basis,
    xi2_db_jackknife,
)
from squeezesim.spinmodel import Kind, ModelSpec, mean_coupling, power_law_couplings


def ghz_dicke(n):
    a = np.zeros(n + 1)
    a[0] = a[-1] = 2**-0.5
    return DickeState(n, a)


def rotation(axis, ang):
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(ang) * k + (1 - math.cos(ang)) * k @ k


# --- squeezing ---------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 12, 51])
def test_css_has_no_squeezing(n):
    sq = squeezing_wineland(css_dicke(n))
    assert sq.xi2 == pytest.approx(1.0, abs=1e-12)
    assert sq.db == pytest.approx(0.0, abs=1e-10)
    # degenerate case picks the axis with the smaller polar angle
    np.testing.assert_allclose(sq.axis, [0, 0, 1], atol=1e-12)


def test_transverse_basis():
    e1, e2 = transverse_basis(np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(e1, [0, 0, 1])
    np.testing.assert_allclose(np.cross(e1, e2), [1, 0, 0])
    e1, _ = transverse_basis(np.array([0.0, 0.0, 2.0]))
    assert abs(e1[2]) < 1e-12


def test_squeezing_dual_engine_n6():
    d = squeezing_wineland(evolve_oat(css_dicke(6), 1.0, 0.3))
    e = squeezing_wineland(ed.evolve_unitary(ed.css_x(6), ModelSpec(Kind.OAT, n=6, chi=1.0), 0.3))
    assert d.xi2 == pytest.approx(e.xi2, abs=1e-9)
    assert d.xi2 < 1
    np.testing.assert_allclose(d.axis, e.axis, atol=1e-7)


def test_squeezing_matches_angular_scan():
    m = dicke_moments(evolve_oat(css_dicke(20), 1.0, 0.08))
    e1, e2 = transverse_basis(m.mean)
    ang = np.linspace(0, np.pi, 20001)
    dirs = np.outer(np.cos(ang), e1) + np.outer(np.sin(ang), e2)
    var = np.einsum("pa,ab,pb->p", dirs, m.covariance, dirs)
    scan = 20 * var.min() / (m.mean @ m.mean)
    assert squeezing_wineland(m).xi2 == pytest.approx(scan, rel=1e-6)


def test_squeezing_rotation_invariant():
    m = dicke_moments(evolve_oat(css_dicke(10), 1.0, 0.15))
    r = rotation([0.3, -1.0, 0.7], 1.1)
    a, b = squeezing_wineland(m), squeezing_wineland(m.rotated(r))
    assert a.xi2 == pytest.approx(b.xi2, rel=1e-12)


def test_squeezing_zero_bloch_vector():
    with pytest.raises(ValueError):
        squeezing_wineland(ghz_dicke(4))


# --- total spin ----------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 5, 12])
def test_total_spin_css(n):
    s2, norm = total_spin(css_dicke(n))
    assert s2 == pytest.approx(n / 2 * (n / 2 + 1), rel=1e-13)
    assert norm == pytest.approx(1.0, rel=1e-13)
    assert total_spin(ed.css_x(n))[1] == pytest.approx(1.0, rel=1e-13)


def test_total_spin_single_site():
    assert total_spin(ed.css_x(1))[0] == pytest.approx(0.75)


def test_total_spin_xx_above_ising():
    c = power_law_couplings(8, 560.0, 1.0)
    xx = ModelSpec(Kind.XX, c)
    times = np.linspace(0, 2e-3, 41)
    xi = [squeezing_wineland(ed.evolve_unitary(ed.css_x(8), xx, t)).xi2 for t in times[1:]]
    t_opt = times[1 + int(np.argmin(xi))]
    _, nx = total_spin(ed.evolve_unitary(ed.css_x(8), xx, t_opt))
    _, ni = total_spin(ising_correlators(c, t_opt))
    assert ni < nx < 1


# --- spin waves ----------------------------------------------------------------


def test_kgrid():
    np.testing.assert_array_equal(KGrid(4).m, [-1, 0, 1, 2])
    np.testing.assert_array_equal(KGrid(5).m, [-2, -1, 0, 1, 2])
    assert 0 in KGrid(12).k
    assert KGrid(4).k[-1] == pytest.approx(np.pi)


def test_spin_waves_vanish_for_css():
    sw = spin_wave_occupations(ed.measure_moments(ed.css_x(7)))
    np.testing.assert_allclose(sw.occupation, 0, atol=1e-14)
    assert sw.mean_sx == pytest.approx(1.0)


def _occupation_loop(tab, positions, k):
    n = tab.n
    acc = 0.5 - tab.first[:, 0].sum() / (2 * n)
    for i in range(n):
        for j in range(i + 1, n):
            c = tab.second[i, 1, j, 1] + tab.second[i, 2, j, 2]
            acc += c * math.cos(k * (positions[i] - positions[j])) / (2 * n)
    return acc


def test_spin_waves_formula_regression_tfi():
    c = power_law_couplings(8, 560.0, 1.0)
    m = ModelSpec(Kind.TFI, c, b_field=9500.0)
    t = 2.5e-3
    tab = ed.measure_moments(ed.rotating_frame(ed.evolve_unitary(ed.css_x(8), m, t), 9500.0, t))
    pos = [0.0, 1.0, 2.1, 3.0, 4.4, 5.0, 6.0, 7.5]
    sw = spin_wave_occupations(tab, pos)
    ref = [_occupation_loop(tab, pos, k) for k in KGrid(8).k]
    np.testing.assert_allclose(sw.occupation, ref, atol=1e-12)


def test_spin_wave_k0_equals_collective():
    c = power_law_couplings(10, 560.0, 1.0)
    tab = ed.measure_moments(ed.evolve_unitary(ed.css_x(10), ModelSpec(Kind.XX, c), 1e-3))
    cm = tab.collective()
    n = 10
    k0 = 0.5 - 2 * cm.mean[0] / (2 * n) + (4 * (cm.second[1, 1] + cm.second[2, 2]) - 2 * n) / (4 * n)
    assert spin_wave_occupations(tab).k0 == pytest.approx(k0, abs=1e-12)


# --- Husimi ----------------------------------------------------------------------


def test_husimi_css_closed_form():
    q = husimi_q(css_dicke(6), QGrid(16, 32))
    th, ph = np.meshgrid(q.theta, q.phi, indexing="ij")
    np.testing.assert_allclose(q.values, ((1 + np.sin(th) * np.cos(ph)) / 2) ** 6, atol=1e-13)


@pytest.mark.parametrize(
    "state",
    [css_dicke(12), evolve_oat(css_dicke(12), 1.0, np.pi / 3), ghz_dicke(8), dephase_dicke(evolve_oat(css_dicke(6), 1.0, 0.4), 3.0, 0.2)],
)
def test_husimi_normalization(state):
    assert husimi_q(state).normalization() == pytest.approx(1.0, abs=1e-3)


def test_husimi_engines_agree():
    c = power_law_couplings(6, 560.0, 1.0)
    psi = ed.evolve_unitary(ed.css_x(6), ModelSpec(Kind.XX, c), 2e-3)
    g = QGrid(12, 24)
    a = husimi_q(psi, g).values
    b = husimi_q(ed.DensityState.from_pure(psi), g).values
    np.testing.assert_allclose(a, b, atol=1e-12)
    oat = evolve_oat(css_dicke(6), 1.0, 0.7)
    oat_ed = ed.evolve_unitary(ed.css_x(6), ModelSpec(Kind.OAT, n=6, chi=1.0), 0.7)
    np.testing.assert_allclose(husimi_q(oat, g).values, husimi_q(oat_ed, g).values, atol=1e-10)


def test_husimi_normalization_is_symmetric_weight():
    c = power_law_couplings(8, 560.0, 1.0)
    for kind in (Kind.XX, Kind.ISING):
        psi = ed.evolve_unitary(ed.css_x(8), ModelSpec(kind, c), 4e-3)
        weight = float(np.sum(np.abs(ed.symmetric_weights(psi)) ** 2 / comb(8, np.arange(9))))
        assert weight < 0.99
        assert husimi_q(psi).normalization() == pytest.approx(weight, abs=1e-3)


def test_husimi_refuses_trajectory_data():
    tab = MomentTable.from_collective(dicke_moments(css_dicke(4)))
    with pytest.raises(TypeError):
        husimi_q(tab)


@pytest.mark.parametrize("q,heads", [(3, 3), (2, 2)])
def test_oat_cat_peaks(q, heads):
    jb = mean_coupling(power_law_couplings(12, 560.0, 1.0))
    s = evolve_oat(css_dicke(12), jb, cat_time(q, jb))
    peaks = equatorial_peaks(husimi_q(s))
    assert len(peaks) == heads
    gaps = np.diff(np.r_[peaks, peaks[0] + 2 * np.pi])
    np.testing.assert_allclose(gaps, 2 * np.pi / heads, atol=0.1)


def test_ghz_target_peaks_antipodal():
    peaks = equatorial_peaks(husimi_q(ed.rotate_collective(ed.ghz_target(6), np.pi / 2, [0, 1, 0])))
    assert len(peaks) == 2
    assert abs(peaks[1] - peaks[0]) == pytest.approx(np.pi, abs=0.05)


# --- histogram, parity, GHZ fidelity -----------------------------------------------


def test_histogram_examples():
    up = np.zeros(2**5, dtype=complex)
    up[-1] = 1
    h = magnetization_histogram(ed.PureState(5, up))
    assert h[-1] == 1 and h.sum() == 1
    np.testing.assert_allclose(magnetization_histogram(css_dicke(9)), comb(9, np.arange(10)) / 2**9, atol=1e-14)
    np.testing.assert_allclose(magnetization_histogram(ed.css_x(9)), comb(9, np.arange(10)) / 2**9, atol=1e-14)
    g = magnetization_histogram(ghz_dicke(6))
    assert g[0] == pytest.approx(0.5) and g[-1] == pytest.approx(0.5)


def test_parity_from_histogram():
    s = evolve_oat(css_dicke(7), 1.0, 0.33)
    p = magnetization_histogram(s)
    m = np.arange(8) - 3.5
    assert parity(s) == pytest.approx(float(((-1.0) ** (3.5 + m) * p).sum()), abs=1e-10)


@pytest.mark.parametrize("n", [4, 7, 12])
def test_parity_scan_ideal_ghz(n):
    scan = parity_scan(ghz_dicke(n))
    assert scan.contrast == pytest.approx(1.0, abs=1e-10)
    assert scan.resolved
    # N full periods over one turn
    crossings = np.sum(np.diff(np.sign(scan.parity - scan.offset)) != 0)
    assert crossings in (2 * n - 1, 2 * n)


def test_parity_scan_dephased_ghz():
    scan = parity_scan(dephase_dicke(ghz_dicke(6), 1.0, 1e6))
    assert scan.contrast < 1e-9
    assert not scan.resolved


def test_parity_scan_needs_phases():
    with pytest.raises(ValueError):
        parity_scan(ghz_dicke(4), [0.0, 0.1])


def test_ghz_fidelity_formula():
    assert ghz_fidelity(0.5, 0.5, 1.0).fidelity == 1.0
    f = ghz_fidelity(0.5, 0.5, 0.0)
    assert f.fidelity == 0.5 and not f.witness
    assert ghz_fidelity(0.45, 0.45, 0.7).witness
    with pytest.raises(ValueError):
        ghz_fidelity(1.2, 0.0, 0.0)


def test_measured_and_direct_fidelity_agree_for_oat_cat():
    jb = 200.0
    s = evolve_oat(css_dicke(8), jb, cat_time(2, jb))
    f, scan, _ = measured_ghz_fidelity(s)
    assert f.fidelity == pytest.approx(1.0, abs=1e-8)
    aligned, _ = align_cat(s)
    h = magnetization_histogram(aligned)
    assert h[0] + h[-1] == pytest.approx(1.0, abs=1e-8)


def test_pulse_rotates_css():
    m = dicke_moments(pulse(css_dicke(4), np.pi / 2, np.pi / 2))
    np.testing.assert_allclose(m.mean, [0, 0, -2], atol=1e-12)


# --- Ramsey --------------------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 12, 51])
def test_ramsey_sql(n):
    phis = np.linspace(-0.5, 0.5, 41)
    r = ramsey_mse(css_dicke(n), phis)
    assert r.mse[20] == pytest.approx(1 / n, rel=1e-12)
    np.testing.assert_allclose(r.coeffs, [-2, 1, 1 / n], atol=1e-10)
    # the CSS curve lies in the fit family, so the residual vanishes
    model = phis**2 + r.coeffs[0] * phis * np.sin(phis) + r.coeffs[1] * np.sin(phis) ** 2 + r.coeffs[2] * np.cos(phis) ** 2
    np.testing.assert_allclose(r.mse, model, atol=1e-12)
    assert r.gain_vs_sql_db == pytest.approx(0.0, abs=1e-9)


def test_ramsey_squeezed_matches_xi2():
    m = dicke_moments(evolve_oat(css_dicke(30), 1.0, 0.05))
    r = ramsey_mse(m, np.linspace(-0.5, 0.5, 41))
    assert r.mse[20] * 30 == pytest.approx(squeezing_wineland(m).xi2, rel=1e-9)
    assert r.gain_vs_sql_db < 0


def test_ramsey_bias_away_from_zero():
    r = ramsey_mse(css_dicke(12), np.linspace(-3, 3, 61))
    assert r.mse[0] > r.mse[30] and r.mse[-1] > r.mse[30]


def test_ramsey_degenerate_design():
    with pytest.raises(ValueError):
        ramsey_mse(css_dicke(4), [0.1, 0.2])


# --- jackknife ----------------------------------------------------------------------


def test_jackknife_examples():
    assert jackknife_error([2.0, 2.0, 2.0, 2.0]) == 0.0
    assert jackknife_error([1.0, 2.0, 3.0]) == pytest.approx(1 / math.sqrt(3), rel=1e-14)
    x = np.random.default_rng(12345).normal(size=20)
    assert jackknife_error(x, np.var) == pytest.approx(0.32654999429466386, rel=1e-12)
    with pytest.raises(ValueError):
        jackknife_error([1.0, 2.0])


def test_jackknife_mean_equals_standard_error():
    x = np.random.default_rng(1).normal(size=50)
    assert jackknife_error(x) == pytest.approx(x.std(ddof=1) / math.sqrt(50), rel=1e-12)


def test_xi2_jackknife_on_identical_blocks():
    m = dicke_moments(evolve_oat(css_dicke(10), 1.0, 0.1))
    assert xi2_db_jackknife([m] * 5, [1.0] * 5) == pytest.approx(0.0, abs=1e-12)
