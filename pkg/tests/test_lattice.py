import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arwlab.lattice import (KILL, Configuration, DomainError, SiteState,
                            Topology, density, pgm_pixels, read_pgm, write_pgm)


def test_torus_neighbors_wrap():
    top = Topology.torus(5, 2)
    assert set(top.neighbors((0, 0))) == {(1, 0), (4, 0), (0, 1), (0, 4)}


def test_wired_corner_has_two_kills():
    top = Topology.wired(3, 2)
    assert top.neighbors((1, 1)) == [(2, 1), KILL, (1, 2), KILL]


def test_dynamic_never_kills():
    top = Topology.dynamic(1)
    assert top.neighbors((7,)) == [(8,), (6,)]


def test_outside_domain_rejected():
    with pytest.raises(DomainError):
        Topology.wired(3, 2).neighbors((0, 1))
    with pytest.raises(DomainError):
        Topology.torus(5, 2).neighbors((5, 0))


def test_small_torus_rejected():
    with pytest.raises(ValueError):
        Topology.torus(2, 2)


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 9), st.integers(1, 3), st.data())
def test_torus_neighbor_symmetry(L, d, data):
    top = Topology.torus(L, d)
    x = tuple(data.draw(st.integers(0, L - 1)) for _ in range(d))
    nb = top.neighbors(x)
    assert len(nb) == 2 * d and len(set(nb)) == 2 * d
    for y in nb:
        assert x in top.neighbors(y)


def test_wired_interior_has_distinct_neighbors():
    top = Topology.wired(5, 3)
    nb = top.neighbors((3, 3, 3))
    assert KILL not in nb and len(set(nb)) == 6


def test_density_examples():
    assert density(Configuration.empty(Topology.wired(10, 2))) == 0
    z5 = Configuration.from_sites(Topology.torus(5, 1), [(2,)], asleep=True)
    assert density(z5) == pytest.approx(0.2)
    assert density(Configuration.full(Topology.wired(4, 2))) == 1.0
    with pytest.raises(DomainError):
        density(Configuration.empty(Topology.dynamic(2)))


def test_density_ignores_sleep_flags_and_counts_particles():
    top = Topology.torus(4, 2)
    cfg = Configuration.from_sites(top, [(0, 0), (1, 2)], asleep=True)
    before = density(cfg)
    cfg.wake_all()
    assert density(cfg) == before
    cfg.add_active((3, 3))
    assert density(cfg) == pytest.approx(before + 1 / 16)


def test_site_state_round_trip():
    cfg = Configuration.empty(Topology.wired(3, 2))
    cfg[(2, 2)] = SiteState(1, True)
    assert cfg[(2, 2)] == SiteState(1, True) and cfg[(2, 2)].stable
    cfg.add_active((2, 2))
    assert cfg[(2, 2)] == SiteState(2, False) and not cfg[(2, 2)].stable
    assert cfg.total_particles == 2


def test_dynamic_growth_keeps_contents():
    cfg = Configuration.empty(Topology.dynamic(2))
    cfg.add_active((0, 0), 3)
    cfg[(1, -1)] = SiteState(1, True)
    cfg.add_active((200, -150))
    assert cfg[(0, 0)].n == 3
    assert cfg[(1, -1)] == SiteState(1, True)
    assert cfg[(200, -150)].n == 1
    assert cfg.total_particles == 5


def test_pgm_round_trip(tmp_path):
    top = Topology.wired(4, 2)
    cfg = Configuration.empty(top)
    cfg[(1, 1)] = SiteState(1, True)
    cfg.add_active((3, 2), 2)
    path = write_pgm(cfg, tmp_path / "snap.pgm")
    text = path.read_text().split()
    assert text[:4] == ["P2", "4", "4", "255"]
    img = read_pgm(path)
    assert img.shape == (4, 4)
    # row 0 is the smallest y; column is x
    assert img[0, 0] == 255
    assert img[1, 2] == 128
    assert np.count_nonzero(img) == 2
    np.testing.assert_array_equal(img, pgm_pixels(cfg))


def test_pgm_one_dimensional(tmp_path):
    cfg = Configuration.from_sites(Topology.torus(5, 1), [(1,)], asleep=True)
    img = read_pgm(write_pgm(cfg, tmp_path / "line.pgm"))
    assert img.shape == (1, 5) and img[0, 1] == 255
