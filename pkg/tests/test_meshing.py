import numpy as np
import pytest

from cornerwaves.dynamics import flat_contact_abscissa
from cornerwaves.errors import ConfigError
from cornerwaves.geometry import BOTTOM, TOP, WALL, CornerDomain, StripDomain, SurfaceCurve
from cornerwaves.meshing import (MeshSpec, dump_mesh, load_mesh, quality_report, refine_uniform,
                                 sector_mesh, transfer_field, triangulate)


@pytest.fixture(scope="module")
def corner_domain(beach):
    c = flat_contact_abscissa(beach, 0.0)
    x = np.linspace(c, 8.0, 41)
    return CornerDomain(SurfaceCurve(x, 0.02 * np.sin(x - c)), beach)


@pytest.fixture(scope="module")
def corner_mesh(corner_domain):
    return triangulate(corner_domain, MeshSpec(0.25, grading=3))


def test_mesh_covers_domain(corner_mesh, corner_domain):
    rep = quality_report(corner_mesh, corner_domain)
    assert rep["area_defect"] < 1e-3
    # the first ring around a corner sharper than 20 degrees inherits its angle
    assert rep["min_angle"] >= 0.9 * rep["corner_angle"]
    assert np.all(corner_mesh.signed_areas > 0)


def test_boundary_tags_present(corner_mesh):
    for tag in (TOP, BOTTOM, WALL):
        assert corner_mesh.tag_dofs(tag).size > 0
    assert corner_mesh.corner is not None


def test_grading_shrinks_corner_edges(corner_domain):
    uni = triangulate(corner_domain, MeshSpec(0.25, grading=1, resolve_depth=False))
    grd = triangulate(corner_domain, MeshSpec(0.25, grading=3, resolve_depth=False))
    assert grd.n_dofs > uni.n_dofs
    assert grd.edge_lengths.min() < uni.edge_lengths.min()


def test_mesh_spec_guards():
    with pytest.raises(ConfigError):
        MeshSpec(0.0)
    with pytest.raises(ConfigError):
        MeshSpec(0.1, grading=0.5)
    with pytest.raises(ConfigError):
        MeshSpec(0.1, min_angle=10)
    with pytest.raises(ConfigError):
        MeshSpec(0.1, order=3)


def test_refinement_quadruples_triangles():
    m = triangulate(StripDomain(2.0, 1.0), MeshSpec(0.3, grading=1, resolve_depth=False))
    r = refine_uniform(m)
    assert len(r.triangles) == 4 * len(m.triangles)
    assert r.area() == pytest.approx(m.area(), rel=1e-12)
    assert r.h_max < 0.6 * m.h_max


def test_wedge_quality_and_growth():
    counts, hs = [], (0.1, 0.05, 0.025)
    for h in hs:
        m = sector_mesh(np.pi / 8, 1.0, h)
        assert quality_report(m)["min_angle"] >= 20.0
        counts.append(len(m.triangles))
    rate = np.polyfit(np.log(hs), np.log(counts), 1)[0]
    assert rate == pytest.approx(-2.0, abs=0.2)


def test_sector_area():
    om = np.pi / 5
    m = sector_mesh(om, 1.0, 0.05)
    assert m.area() == pytest.approx(om / 2, rel=1e-6)
    assert m.tag_dofs(BOTTOM).size > 0


def test_transfer_exact_for_linear_fields(corner_mesh, corner_domain):
    other = triangulate(corner_domain, MeshSpec(0.3, grading=2))
    for f in (lambda p: np.full(len(p), 3.0), lambda p: 2 * p[:, 0] - p[:, 1] + 1):
        out = transfer_field(f(corner_mesh.nodes), corner_mesh, other)
        np.testing.assert_allclose(out, f(other.nodes), atol=1e-10)


def test_dump_and_load_roundtrip(tmp_path, corner_mesh):
    p = dump_mesh(corner_mesh, tmp_path / "m.txt")
    back = load_mesh(p)
    np.testing.assert_array_equal(back.vertices, corner_mesh.vertices)
    np.testing.assert_array_equal(back.triangles, corner_mesh.triangles)
    np.testing.assert_array_equal(back.bnd_tags, corner_mesh.bnd_tags)
    assert back.corner == corner_mesh.corner
