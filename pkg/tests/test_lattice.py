import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from rydscramble.lattice import (
    BasisMismatchError,
    BasisSizeError,
    ChainGeometry,
    SpinConfiguration,
    build_basis,
    fibonacci,
    find_clusters,
    neel_state,
    product_state,
)

configs = st.lists(st.sampled_from("gr"), min_size=1, max_size=14).map("".join)


def test_three_site_blockaded_states():
    b = build_basis(3, "blockaded")
    assert [str(s) for s in b.states] == ["ggg", "ggr", "grg", "rgg", "rgr"]


def test_thirteen_sites_610():
    assert build_basis(13, "blockaded").dim == 610 == fibonacci(15)


@pytest.mark.parametrize("n", range(1, 13))
def test_matches_enumeration(n):
    b = build_basis(n, "blockaded")
    assert [s.bits for s in b.states] == oracles.enumerate_blockaded(n)


def test_size_cap():
    with pytest.raises(BasisSizeError):
        build_basis(25)
    with pytest.raises(BasisSizeError):
        build_basis(10, max_sites=8)


@given(st.integers(1, 14))
def test_blockaded_dimension(n):
    assert build_basis(n, "blockaded").dim == fibonacci(n + 2)
    assert build_basis(n, "full").dim == 2 ** n


@given(st.integers(2, 12))
def test_blockaded_states_have_no_rr(n):
    occ = build_basis(n, "blockaded").occupations
    assert not np.any(occ[:, 1:] & occ[:, :-1])


@given(configs)
def test_code_roundtrip(s):
    c = SpinConfiguration.from_string(s)
    assert str(SpinConfiguration.from_code(c.code, c.n_sites)) == s
    assert c.is_blockade_allowed() == ("rr" not in s)


@given(st.integers(1, 12), st.data())
def test_index_lookup(n, data):
    b = build_basis(n, "blockaded")
    k = data.draw(st.integers(0, b.dim - 1))
    assert b.index_of(b.states[k]) == k


def test_blockaded_lookup_rejects_rr():
    b = build_basis(4, "blockaded")
    with pytest.raises(Exception):
        b.index_of("rrgg")


def test_site_one_is_msb():
    b = build_basis(3, "full")
    assert b.index_of("rgg") == 4
    assert np.array_equal(b.occupations[4], [1, 0, 0])


def test_neel_states():
    assert str(neel_state(5)) == "rgrgr"
    assert str(neel_state(5, "Z2bar")) == "grgrg"
    with pytest.raises(ValueError):
        neel_state(5, "Z3")


def test_product_state_norm():
    psi = product_state(build_basis(6, "blockaded"), "rgrgrg")
    assert psi.norm() == pytest.approx(1.0, abs=1e-12)
    assert np.array_equal(psi.densities(), [1, 0, 1, 0, 1, 0])


def test_basis_mismatch():
    a = product_state(build_basis(4, "blockaded"), "gggg")
    b = product_state(build_basis(4, "full"), "gggg")
    with pytest.raises(BasisMismatchError):
        a.overlap(b)


def test_clusters():
    assert find_clusters("ggrrgggrrrg") == [(3, 4), (8, 10)]
    assert find_clusters("grgrg") == []


def test_geometry_displacement():
    g = ChainGeometry.regular(4, 6.0)
    assert g.positions == (0.0, 6.0, 12.0, 18.0)
    assert g.displaced([0, 0.5, 0, 0]).distance(0, 1) == pytest.approx(6.5)
