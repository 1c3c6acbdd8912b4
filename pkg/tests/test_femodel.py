import json

import numpy as np
import pytest

from pehopt.errors import AssemblyError, ConfigError, MeshError
from pehopt.femodel import ModelSettings, assemble, build_device, capacitance, sections
from pehopt.geometry import DeviceDimensions, ShapeParams, build_patch, expand_shape
from pehopt.materials import MaterialSet, load_materials
from pehopt.modal import fundamental_frequency

from oracles import euler_bernoulli_bimorph, ritz_plate_frequency, uniform_materials


def _model(L=0.3, l=0.5, H=0.2, R=1.0, el=(4, 4), mats=None, **kw):
    p = ShapeParams(L=L, l=l, H=H, R=R)
    return build_device(p, ModelSettings(elements=el, materials=mats or MaterialSet(), **kw))


def test_capacitance_examples():
    mats = MaterialSet()
    d = DeviceDimensions(L=0.3, W=0.3, h=1e-3, h_p=2e-4, h_s=6e-4, L_pzt=0.15)
    assert capacitance(d, mats) == pytest.approx(1.0766e-6, rel=1e-4)
    thin = DeviceDimensions(L=0.3, W=0.3, h=1e-3, h_p=1e-4, h_s=8e-4, L_pzt=0.15)
    assert capacitance(thin, mats) == pytest.approx(2 * capacitance(d, mats), rel=1e-12)
    d4 = DeviceDimensions(L=0.3, W=0.3, h=1e-3, h_p=2e-4, h_s=6e-4, L_pzt=0.12)
    d2 = DeviceDimensions(L=0.3, W=0.3, h=1e-3, h_p=2e-4, h_s=6e-4, L_pzt=0.06)
    assert capacitance(d2, mats) == pytest.approx(0.5 * capacitance(d4, mats), rel=1e-12)


def test_capacitance_rejects_zero_piezo():
    d = DeviceDimensions(L=0.3, W=0.3, h=1e-3, h_p=0.0, h_s=1e-3, L_pzt=0.15)
    with pytest.raises(AssemblyError):
        capacitance(d, MaterialSet())


def test_section_integrals():
    d = expand_shape(ShapeParams(L=0.3, l=0.5, H=0.2))
    mats = MaterialSet()
    sub, pz = sections(d, mats)
    assert sub.inertia0 == pytest.approx(9000 * 6e-4)
    assert sub.inertia2 == pytest.approx(9000 * 6e-4 ** 3 / 12)
    assert pz.inertia0 == pytest.approx(2 * 7800 * 2e-4)
    z2 = 2 / 3 * ((5e-4) ** 3 - (3e-4) ** 3)
    assert pz.bending[0, 0] == pytest.approx(69.5e9 * z2)
    # series bimorph: e31 times the mid-layer lever arm (h_p + h_s) / 2
    assert pz.coupling[0] == pytest.approx(-16.0 * (2e-4 + 6e-4) / 2, rel=1e-12)
    _, pz2 = sections(d, mats, "z_squared")
    assert pz2.coupling[0] == pytest.approx(-16.0 * z2 / 2e-4, rel=1e-12)
    with pytest.raises(ValueError):
        sections(d, mats, "bogus")


@pytest.mark.parametrize("shape", [(0.3, 0.5, 0.2), (0.1, 1.0, 0.05), (0.5, 0.1, 0.45), (0.23, 0.71, 0.33)])
def test_matrix_identities(shape):
    m = _model(*shape, el=(5, 4))
    one = np.ones(m.M.shape[0])
    assert np.linalg.norm(m.F - m.M @ one) <= 1e-10 * np.linalg.norm(m.F)
    for A in (m.M, m.K):
        assert np.max(np.abs(A - A.T)) <= 1e-12 * np.max(np.abs(A))
    M, K, _, _ = m.constrained()
    assert np.linalg.eigvalsh(M).min() > 0
    assert np.linalg.eigvalsh(K).min() > 0


def test_zero_piezo_constants_give_zero_coupling():
    mats = MaterialSet().with_changes(piezo={"e31": 0.0, "e32": 0.0})
    assert np.all(_model(mats=mats).Theta == 0.0)


def test_quadrature_order_does_not_change_matrices():
    d = expand_shape(ShapeParams(L=0.27, l=0.62, H=0.15))
    patch = build_patch(d, (3, 3), (4, 4))
    a = assemble(patch, d)
    b = assemble(patch, d, quad_points=(8, 8))
    for x, y in ((a.M, b.M), (a.K, b.K), (a.Theta, b.Theta), (a.F, b.F)):
        assert np.max(np.abs(x - y)) <= 1e-10 * np.max(np.abs(x))


def test_misaligned_interface_raises():
    d = expand_shape(ShapeParams(L=0.3, l=0.5, H=0.2))
    patch = build_patch(expand_shape(ShapeParams(L=0.3, l=0.6, H=0.2)))
    with pytest.raises(MeshError):
        assemble(patch, d)
    full = build_patch(expand_shape(ShapeParams(L=0.3, l=1.0, H=0.2)))
    with pytest.raises(MeshError):
        assemble(full, d)


def test_clamp_removes_two_columns():
    m = _model(el=(4, 4))
    n_u, n_v = m.patch.shape
    assert m.fixed.size == 2 * n_v and m.n_dof == (n_u - 2) * n_v


@pytest.mark.parametrize("shape", [(0.1, 0.1, 0.05), (0.5, 1.0, 0.45), (0.3, 0.5, 0.2), (0.17, 0.83, 0.3)])
def test_mesh_convergence(shape):
    f8 = fundamental_frequency(_model(*shape, el=(8, 8)))
    f16 = fundamental_frequency(_model(*shape, el=(16, 16)))
    assert abs(f8 - f16) / f16 < 5e-3


@pytest.mark.parametrize("L, H", [(0.1, 0.2), (0.3, 0.05), (0.5, 0.45)])
def test_composite_beam_oracle(L, H):
    p = ShapeParams(L=L, l=1.0, H=H, R=0.1)
    f = fundamental_frequency(build_device(p, ModelSettings(elements=(16, 4))))
    assert abs(f - euler_bernoulli_bimorph(p, MaterialSet())) / f < 0.02


def test_material_presets(tmp_path):
    assert load_materials(None) == MaterialSet()
    assert load_materials("bronze_pzt5a") == MaterialSet()
    doc = MaterialSet().to_dict()
    doc["substrate"]["E"] = 70e9
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    assert load_materials(path).substrate.E == 70e9
    assert MaterialSet.from_dict(doc) == load_materials(doc)
    with pytest.raises(ConfigError):
        load_materials("nope")
    with pytest.raises(ConfigError):
        MaterialSet().with_changes(substrate={"nu": 0.6})
    with pytest.raises(ConfigError):
        MaterialSet.from_dict({"piezo": {"bogus": 1}})


def test_settings_round_trip():
    s = ModelSettings(elements=(6, 5), n_modes=4, R_l=2000.0)
    assert ModelSettings.from_dict(s.to_dict()) == s


def test_uniform_plate_against_ritz():
    mats = uniform_materials()
    s = mats.substrate
    f = fundamental_frequency(build_device(ShapeParams(L=0.2, l=1.0, H=0.3, R=1.5),
                                           ModelSettings(elements=(12, 12), materials=mats)))
    ref = ritz_plate_frequency(0.2, 0.3, 1e-3, s.E, s.nu, s.rho)
    assert abs(f - ref) / ref < 5e-3
