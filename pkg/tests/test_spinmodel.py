import logging
import math

import numpy as np
import pytest

from squeezesim.spinmodel import (
    CouplingMatrix,
    Kind,
    ModelSpec,
    Schedule,
    gamma_from_t2,
    load_couplings,
    mean_coupling,
    power_law_couplings,
    save_couplings,
)


def test_power_law_small():
    c = power_law_couplings(3, 1.0, 1.0)
    np.testing.assert_array_equal(c.j, [[0, 1, 0.5], [1, 0, 1], [0.5, 1, 0]])
    np.testing.assert_array_equal(c.positions, [0, 1, 2])


def test_power_law_nearest_neighbour():
    assert power_law_couplings(2, 560, 1.0).j[0, 1] == 560


def test_power_law_n51_corner():
    # 216 * exp(-0.9 ln 50) evaluated independently
    assert power_law_couplings(51, 216, 0.9).j[0, 50] == pytest.approx(6.388232990234315, rel=1e-14)


@pytest.mark.parametrize("args", [(1, 1.0, 1.0), (3, math.nan, 1.0), (3, 1.0, math.inf), (3, -1.0, 1.0), (3, 1.0, 3.0)])
def test_power_law_rejects(args):
    with pytest.raises(ValueError):
        power_law_couplings(*args)


def test_power_law_translation_symmetric():
    c = power_law_couplings(9, 3.0, 1.3)
    for i in range(9):
        for k in range(9):
            if i != k:
                assert c.j[i, k] == c.j[0, abs(i - k)]


def test_mean_coupling_examples():
    assert mean_coupling(power_law_couplings(3, 1, 1)) == pytest.approx(2.5 / 3)
    assert mean_coupling(power_law_couplings(7, 2.5, 0)) == pytest.approx(2.5)
    # exact rational pair sum for N=12, J0=560, alpha=1
    assert mean_coupling(power_law_couplings(12, 560, 1)) == pytest.approx(214.14508723599633, rel=1e-14)


def test_coupling_invariants():
    with pytest.raises(ValueError):
        CouplingMatrix(np.array([[0, 1], [2, 0]]))
    with pytest.raises(ValueError):
        CouplingMatrix(np.array([[1, 1], [1, 0]]))
    with pytest.raises(ValueError):
        CouplingMatrix(np.array([[0, 1], [1, 0]]), positions=[1.0, 0.0])
    with pytest.raises(ValueError):
        CouplingMatrix(np.zeros((2, 3)))


def test_load_round_trip(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("0,5\n5,0\n")
    assert load_couplings(p).j[0, 1] == 5


def test_load_symmetrizes_quietly(tmp_path, caplog):
    p = tmp_path / "c.csv"
    p.write_text("0,5\n4.999999999,0\n")
    with caplog.at_level(logging.WARNING):
        c = load_couplings(p)
    assert c.j[0, 1] == pytest.approx(4.9999999995, abs=1e-12)
    assert c.j[1, 0] == c.j[0, 1]
    assert not caplog.records


def test_load_warns_on_asymmetry(tmp_path, caplog):
    p = tmp_path / "c.csv"
    p.write_text("0,5\n4,0\n")
    with caplog.at_level(logging.WARNING):
        load_couplings(p)
    assert any("asymmetric" in r.message for r in caplog.records)


def test_load_rejects_non_square(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("0,1\n1,0\n2,2\n")
    with pytest.raises(ValueError, match="non-square"):
        load_couplings(p)


@pytest.mark.parametrize("text", ["0,x\nx,0\n", "0,1\n1\n", "0,nan\nnan,0\n", ""])
def test_load_rejects_malformed(tmp_path, text):
    p = tmp_path / "c.csv"
    p.write_text(text)
    with pytest.raises(ValueError):
        load_couplings(p)


def test_positions_line(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("# positions: 0,1.5,3.25\n0,1,2\n1,0,3\n2,3,0\n")
    c = load_couplings(p)
    np.testing.assert_array_equal(c.positions, [0, 1.5, 3.25])


def test_save_load_bit_exact(tmp_path):
    c = power_law_couplings(11, 216.0, 0.9)
    p = tmp_path / "c.csv"
    save_couplings(c, p)
    assert load_couplings(p) == c


def test_model_spec_invariants():
    c = power_law_couplings(4, 1.0, 1.0)
    with pytest.raises(ValueError):
        ModelSpec(Kind.XX, c, gamma_z=-1.0)
    with pytest.raises(ValueError):
        ModelSpec(Kind.XX, c, b_field=1.0)
    with pytest.raises(ValueError):
        ModelSpec(Kind.OAT, n=4, chi=0.0)
    with pytest.raises(ValueError):
        ModelSpec(Kind.ISING)
    assert ModelSpec("PL-TFI", c, b_field=9500).kind is Kind.TFI
    assert ModelSpec(Kind.OAT, n=5, chi=1.0).n == 5


def test_gamma_from_t2():
    assert gamma_from_t2(0.068) == pytest.approx(29.41176470588235)


def test_schedule():
    s = Schedule.uniform(1.0, 5)
    assert s.sample_times == (0.0, 0.25, 0.5, 0.75, 1.0)
    with pytest.raises(ValueError):
        Schedule(1.0, ())
    with pytest.raises(ValueError):
        Schedule(1.0, (0.5, 0.5))
    with pytest.raises(ValueError):
        Schedule(1.0, (0.5, 2.0))
