import json
import math

import numpy as np
import pytest

from volfield.fields import (
    SCHEMA,
    FlowEscapeError,
    LatitudeField,
    LatitudeSpec,
    MeridianField,
    TTypeField,
    TTypeSpec,
    ZetaSpec,
    dump_field,
    eval_latitude,
    eval_meridian,
    eval_ttype,
    field_from_dict,
    latitude,
    load_field,
    meridian,
    orthonormal_complement,
)
from volfield.geometry import DomainError


def test_zeta_closes_up_exactly():
    spec = ZetaSpec(3, 0.7, ((0.1, -0.2), (0.05, 0.3)))
    assert spec.zeta(2 * math.pi) - spec.zeta(0.0) == pytest.approx(6 * math.pi, abs=1e-13)


def test_zeta_derivatives_match_differences():
    spec = ZetaSpec(2, 0.1, ((0.3, 0.1), (-0.2, 0.05)))
    phi = np.linspace(0, 6, 13)
    h = 1e-5
    assert np.allclose(spec.dzeta(phi), (spec.zeta(phi + h) - spec.zeta(phi - h)) / (2 * h), atol=1e-8)
    assert np.allclose(spec.d2zeta(phi), (spec.dzeta(phi + h) - spec.dzeta(phi - h)) / (2 * h), atol=1e-7)


def test_zeta_rejects_fractional_winding():
    with pytest.raises(ValueError):
        ZetaSpec(1.5)


@pytest.mark.parametrize("spec,phi,expected", [
    (ZetaSpec(0, 0.0), 1.234, (1.0, 0.0)),
    (ZetaSpec(1, 0.0), math.pi / 2, (0.0, 1.0)),
    (ZetaSpec(2, math.pi), math.pi / 2, (1.0, 0.0)),
])
def test_eval_meridian_examples(spec, phi, expected):
    a, b = eval_meridian(spec, 0.8, phi)
    assert (float(a), float(b)) == pytest.approx(expected, abs=1e-15)


def test_eval_latitude_examples():
    a, b = eval_latitude(LatitudeSpec(0.0), math.pi / 2, 2.0)
    assert (float(a), float(b)) == pytest.approx((0.0, 1.0), abs=1e-15)
    a, b = eval_latitude(LatitudeSpec(0.0), math.pi / 3, math.pi)
    assert (float(a), float(b)) == pytest.approx((1.0, 0.0), abs=1e-15)


def test_latitude_holonomy_mismatch():
    spec = LatitudeSpec(0.2)
    for theta in (0.3, 1.0, 2.0, 2.9):
        jump = 2 * math.pi * math.cos(theta)
        assert spec.eta(theta, 2 * math.pi) - spec.eta(theta, 0.0) == pytest.approx(jump)
        assert abs(jump / (2 * math.pi) - round(jump / (2 * math.pi))) > 1e-3


@pytest.mark.parametrize("phi", [0.0, 2 * math.pi, -0.5, 7.0])
def test_latitude_slit(phi):
    with pytest.raises(DomainError):
        eval_latitude(LatitudeSpec(), 1.0, phi)


def test_latitude_has_no_winding():
    assert latitude().winding is None
    assert not latitude().full_circle


def test_orthonormal_complement():
    assert orthonormal_complement(1.0, 0.0) == pytest.approx((0.0, 1.0))
    assert orthonormal_complement(0.0, 1.0) == pytest.approx((-1.0, 0.0))
    z = 0.83
    assert orthonormal_complement(math.cos(z), math.sin(z)) == pytest.approx((-math.sin(z), math.cos(z)))
    with pytest.raises(ValueError):
        orthonormal_complement(1.0, 1.0)


@pytest.mark.parametrize("field", [meridian(3, 0.2, ((0.4, -0.1),)), latitude(0.5)])
def test_unit_norm_closed_forms(field):
    rng = np.random.default_rng(3)
    theta = rng.uniform(1e-6, math.pi - 1e-6, 100_000)
    phi = rng.uniform(1e-9, 2 * math.pi - 1e-9, 100_000)
    a, b = field.coefficients(theta, phi)
    assert np.max(np.abs(a * a + b * b - 1.0)) < 1e-12


def test_phase_equivariance():
    rng = np.random.default_rng(5)
    theta, phi = rng.uniform(0.1, 3.0, 50), rng.uniform(0, 6.28, 50)
    a0, b0 = eval_meridian(ZetaSpec(2, 0.3), theta, phi)
    a1, b1 = eval_meridian(ZetaSpec(2, 1.1), theta, phi)
    d = 0.8
    assert np.allclose(a1, math.cos(d) * a0 - math.sin(d) * b0, atol=1e-14)
    assert np.allclose(b1, math.sin(d) * a0 + math.cos(d) * b0, atol=1e-14)


def test_ttype_meridian_direction_constant_field():
    f = TTypeField(TTypeSpec((1.0, 0.0), ZetaSpec(0, 0.0)))
    t, p = np.meshgrid(np.linspace(0.1, 3.0, 6), np.linspace(0.0, 6.0, 6), indexing="ij")
    a, b = f.coefficients(t, p)
    assert np.max(np.abs(a - 1.0)) < 1e-8 and np.max(np.abs(b)) < 1e-8


@pytest.mark.parametrize("k", [1, 2])
def test_ttype_meridian_direction_reproduces_meridian(k):
    zeta = ZetaSpec(k, 0.4, ((0.1, 0.2),))
    f = TTypeField(TTypeSpec((1.0, 0.0), zeta))
    t, p = np.meshgrid(np.linspace(0.1, 3.0, 5), np.linspace(0.1, 6.0, 5), indexing="ij")
    a, b = f.coefficients(t, p)
    ea, eb = eval_meridian(zeta, t, p)
    assert max(np.max(np.abs(a - ea)), np.max(np.abs(b - eb))) < 1e-7
    assert f.winding == k


def test_ttype_parallel_direction_reproduces_latitude():
    phi_t = math.pi
    phi0 = 0.3
    # on the meridian phi = phi_t the latitude angle is pi/2 - phi_t cos(theta) - phi0,
    # written as zeta(theta) = pi/2 - phi0 - phi_t cos(theta) with one cosine mode
    initial = ZetaSpec(0, math.pi / 2 - phi0, ((-phi_t, 0.0),))
    f = TTypeField(TTypeSpec((0.0, 1.0), initial, "meridian", phi_t))
    t, p = np.meshgrid(np.linspace(0.2, 2.9, 5), np.linspace(0.3, 6.0, 5), indexing="ij")
    a, b = f.coefficients(t, p)
    ea, eb = eval_latitude(LatitudeSpec(phi0), t, p)
    assert max(np.max(np.abs(a - ea)), np.max(np.abs(b - eb))) < 1e-7


def test_ttype_norm_drift():
    f = TTypeField(TTypeSpec((0.6, 0.8), ZetaSpec(1, 0.2)))
    rng = np.random.default_rng(2)
    for t, p in zip(rng.uniform(0.3, 2.8, 10), rng.uniform(0, 6.2, 10)):
        assert f.transport_drift(t, p) < 1e-9
        a, b = f.coefficients(t, p)
        assert abs(float(a * a + b * b) - 1.0) < 1e-9


def test_ttype_unit_norm_sampled():
    f = TTypeField(TTypeSpec((0.8, -0.6), ZetaSpec(2, 0.0)))
    rng = np.random.default_rng(4)
    t, p = rng.uniform(0.3, 2.8, 200), rng.uniform(0, 6.2, 200)
    a, b = eval_ttype(f.spec, t, p)
    assert np.max(np.abs(a * a + b * b - 1.0)) < 1e-9


def test_ttype_flow_escape():
    # a steep loxodrome reaches the pole before the far meridian transversal
    f = TTypeField(TTypeSpec((0.999, math.sqrt(1 - 0.999**2)), ZetaSpec(), "meridian", math.pi))
    with pytest.raises(FlowEscapeError):
        f.coefficients(0.3, 0.5)


def test_ttype_spec_validation():
    with pytest.raises(ValueError):
        TTypeSpec((1.0, 1.0))
    with pytest.raises(ValueError):
        TTypeSpec((0.0, 1.0))  # never meets the equator
    with pytest.raises(ValueError):
        TTypeSpec((1.0, 0.0), transversal="meridian")


def test_json_round_trip(tmp_path):
    fields = [
        meridian(2, 0.5, ((0.1, 0.2),)),
        latitude(0.25),
        TTypeField(TTypeSpec((0.6, 0.8), ZetaSpec(1, 0.1))),
    ]
    for f in fields:
        path = tmp_path / f"{f.family}.json"
        dump_field(f, path)
        doc = json.loads(path.read_text())
        assert doc["schema"] == SCHEMA
        g = load_field(path)
        assert type(g) is type(f)
        assert g.to_dict() == f.to_dict()
        t, p = 1.1, 2.2
        assert np.allclose(g.coefficients(t, p), f.coefficients(t, p), atol=1e-15)


def test_json_minimal_document():
    f = field_from_dict({"family": "meridian", "k": 1})
    assert isinstance(f, MeridianField) and f.spec == ZetaSpec(1)
    assert isinstance(field_from_dict({"family": "latitude"}), LatitudeField)


def test_json_rejects_unknown():
    with pytest.raises(ValueError):
        field_from_dict({"schema": "volfield-spec/2", "family": "meridian"})
    with pytest.raises(ValueError):
        field_from_dict({"family": "spiral"})
