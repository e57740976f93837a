"""
Unit Tests for the Geometry Kernel

Covers the pseudo-Euclidean inner product, manifold membership, the
diffeomorphism psi, sphere and origin log/exp maps and projection.

Educational Note:
Hand-evaluated examples pin the sign convention (minus on the time block)
and the exact formulas; randomized batches of 10,000 points check the
properties that must hold everywhere, such as membership after every map
and the psi round trip.

To run these tests:
    pytest tests/test_geometry.py -v
"""

import math

import numpy as np
import pytest
import torch

from src.geometry import (
    Curvature,
    ProductPoint,
    PseudoHyperboloid,
    PseudoPoint,
    Signature,
    TangentVector,
    cosine,
    diffeo_exp_o,
    diffeo_log_o,
    numeric_policy,
    on_manifold,
    origin,
    project_to_q,
    ps_inner,
    ps_norm,
    psi,
    psi_inv,
    sph_exp,
    sph_log,
)
from src.utils.errors import (
    CutLocusError,
    DimensionMismatchError,
    GeometryError,
    ManifoldMembershipError,
    PsiUndefinedError,
)
from tests.conftest import random_points, random_tangents

pytestmark = [pytest.mark.unit, pytest.mark.geometry]

SIGNATURES = [Signature(1, 1), Signature(3, 2), Signature(9, 9)]


@pytest.fixture
def sqrt5_point():
    """(time=(0, sqrt 5), space=(2)) on the beta=-1 manifold."""
    return PseudoPoint.from_blocks([0.0, math.sqrt(5.0)], [2.0], -1.0)


# ============================================================================
# Types
# ============================================================================

@pytest.mark.parametrize("s,t", [(0, 1), (1, 0), (-1, 2)])
def test_signature_rejects_empty_blocks(s, t):
    """Both blocks must be nonempty."""
    with pytest.raises(GeometryError):
        Signature(s, t)


def test_signature_dimensions():
    sig = Signature(s=9, t=9)
    assert sig.time_dim == 10
    assert sig.ambient_dim == 19


@pytest.mark.parametrize("beta", [0.0, 1.0, float("nan")])
def test_curvature_must_be_negative(beta):
    with pytest.raises(GeometryError):
        Curvature(beta)


def test_point_dimension_checked():
    with pytest.raises(DimensionMismatchError):
        PseudoPoint(torch.zeros(4), Signature(1, 1), -1.0)


# ============================================================================
# Inner Product and Membership
# ============================================================================

def test_ps_inner_examples(sqrt5_point):
    """Minus sign on the time block, plus on the space block."""
    sig = Signature(1, 1)
    o = origin(sig, -1.0)
    assert float(ps_inner(o, o, sig)) == -1.0
    assert float(ps_inner(sqrt5_point, sqrt5_point, sig)) == pytest.approx(-1.0, abs=1e-12)
    x = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)
    y = torch.tensor([0.0, 1.0, 3.0], dtype=torch.float64)
    assert float(ps_inner(x, y, sig)) == 0.0


def test_ps_inner_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        ps_inner(torch.zeros(3), torch.zeros(4), Signature(1, 1))


def test_ps_inner_symmetric_and_bilinear(rng):
    sig = Signature(3, 2)
    x, y, z = (torch.from_numpy(rng.standard_normal((1000, sig.ambient_dim))) for _ in range(3))
    a, b = 1.7, -0.3
    assert torch.allclose(ps_inner(x, y, sig), ps_inner(y, x, sig), rtol=1e-12, atol=0)
    lhs = ps_inner(a * x + b * y, z, sig)
    rhs = a * ps_inner(x, z, sig) + b * ps_inner(y, z, sig)
    assert torch.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_on_manifold_examples(sqrt5_point):
    assert bool(on_manifold(origin(Signature(1, 1), -1.0), 1e-6))
    assert bool(on_manifold(sqrt5_point, 1e-6))
    off = PseudoPoint.from_blocks([1.0, 1.0], [0.0], -1.0)
    assert not bool(on_manifold(off, 1e-6))


def test_on_manifold_rejects_nonpositive_tolerance(sqrt5_point):
    with pytest.raises(ValueError):
        on_manifold(sqrt5_point, 0.0)


def test_check_membership_raises(manifold):
    bad = manifold.origin() * 2.0
    with pytest.raises(ManifoldMembershipError):
        manifold.check_membership(bad)


# ============================================================================
# Diffeomorphism psi
# ============================================================================

def test_psi_examples(sqrt5_point):
    p = psi(origin(Signature(1, 1), -1.0))
    assert p.sphere.tolist() == [1.0, 0.0]
    assert p.euclid.tolist() == [0.0]

    p = psi(sqrt5_point)
    assert torch.allclose(p.sphere, torch.tensor([0.0, 1.0], dtype=torch.float64), atol=1e-15)
    assert p.euclid.tolist() == [2.0]


def test_psi_undefined_for_zero_time_block():
    x = PseudoPoint.from_blocks([0.0, 0.0], [1.0], -1.0)
    with pytest.raises(PsiUndefinedError):
        psi(x)


def test_psi_inv_examples():
    x = psi_inv(ProductPoint([1.0, 0.0], [0.0]), -1.0)
    assert x.coords.tolist() == [1.0, 0.0, 0.0]

    x = psi_inv(ProductPoint([0.0, 1.0], [2.0]), -1.0)
    assert torch.allclose(x.coords, torch.tensor([0.0, math.sqrt(5.0), 2.0], dtype=torch.float64))
    assert bool(on_manifold(x))


def test_psi_inv_rejects_off_sphere_input():
    with pytest.raises(ManifoldMembershipError):
        psi_inv(ProductPoint([1.1, 0.0], [0.0]), -1.0)


@pytest.mark.parametrize("sig", SIGNATURES, ids=str)
@pytest.mark.parametrize("beta", [-1.0, -0.25, -4.0])
def test_psi_round_trips(rng, sig, beta):
    """psi_inv(psi(x)) = x and psi(psi_inv(p)) = p within 1e-9."""
    m = PseudoHyperboloid(sig, beta)
    x = random_points(m, 10_000, rng, scale=0.7)
    sphere, euclid = m.psi(x)
    assert torch.allclose(m.psi_inv(sphere, euclid), x, rtol=0, atol=1e-9)

    raw = torch.from_numpy(rng.standard_normal((10_000, sig.time_dim)))
    sphere = m.radius * raw / raw.norm(dim=-1, keepdim=True)
    euclid = torch.from_numpy(rng.standard_normal((10_000, sig.s)))
    back_sphere, back_euclid = m.psi(m.psi_inv(sphere, euclid))
    assert torch.allclose(back_sphere, sphere, rtol=0, atol=1e-9)
    assert torch.equal(back_euclid, euclid)


def test_psi_inv_membership_random(rng):
    """1000 random product points land on the manifold."""
    sig = Signature(3, 2)
    raw = rng.standard_normal((1000, sig.time_dim))
    sphere = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    x = psi_inv(ProductPoint(sphere, 3.0 * rng.standard_normal((1000, sig.s))), -1.0)
    assert bool(on_manifold(x).all())


# ============================================================================
# Sphere Maps
# ============================================================================

def test_sph_log_examples():
    b = torch.tensor([1.0, 0.0], dtype=torch.float64)
    assert torch.count_nonzero(sph_log(b, b, 1.0)) == 0
    v = sph_log(b, [0.0, 1.0], 1.0)
    assert torch.allclose(v, torch.tensor([0.0, math.pi / 2], dtype=torch.float64), atol=1e-15)


def test_sph_log_rejects_antipode():
    with pytest.raises(CutLocusError, match="cut locus"):
        sph_log([1.0, 0.0], [-1.0, 0.0], 1.0)


def test_sph_exp_examples():
    b = torch.tensor([1.0, 0.0], dtype=torch.float64)
    assert torch.equal(sph_exp(b, torch.zeros(2, dtype=torch.float64), 1.0), b)
    p = sph_exp(b, [0.0, math.pi / 2], 1.0)
    assert torch.allclose(p, torch.tensor([0.0, 1.0], dtype=torch.float64), atol=1e-15)


@pytest.mark.parametrize("radius", [1.0, 0.5, 3.0])
def test_sphere_round_trip_random(rng, radius):
    """sph_exp(b, sph_log(b, p)) = p and the result stays on the sphere."""
    dim = 4
    base = rng.standard_normal((1000, dim))
    base = radius * base / np.linalg.norm(base, axis=1, keepdims=True)
    p = rng.standard_normal((1000, dim))
    p = radius * p / np.linalg.norm(p, axis=1, keepdims=True)
    # keep clear of the antipode
    keep = (base * p).sum(axis=1) / radius**2 > -0.999
    base, p = torch.from_numpy(base[keep]), torch.from_numpy(p[keep])

    v = sph_log(base, p, radius)
    assert torch.allclose((v * base).sum(dim=-1), torch.zeros(len(v), dtype=torch.float64), atol=1e-9)
    q = sph_exp(base, v, radius)
    assert torch.allclose(q, p, rtol=0, atol=1e-6)
    assert torch.allclose(q.norm(dim=-1), torch.full((len(q),), radius, dtype=torch.float64), rtol=0, atol=1e-9)


# ============================================================================
# Log / Exp at the Origin
# ============================================================================

def test_diffeo_log_o_examples():
    sig = Signature(1, 1)
    assert torch.count_nonzero(diffeo_log_o(origin(sig, -1.0)).coords) == 0

    y = psi_inv(ProductPoint([0.0, 1.0], [2.0]), -1.0)
    xi = diffeo_log_o(y)
    expected = torch.tensor([0.0, math.pi / 2, 2.0], dtype=torch.float64)
    assert torch.allclose(xi.coords, expected, atol=1e-12)


def test_diffeo_exp_o_examples():
    sig = Signature(1, 1)
    zero = TangentVector(torch.zeros(3), sig, -1.0)
    assert torch.equal(diffeo_exp_o(zero).coords, origin(sig, -1.0).coords)

    xi = TangentVector([0.0, math.pi / 2, 2.0], sig, -1.0)
    expected = torch.tensor([0.0, math.sqrt(5.0), 2.0], dtype=torch.float64)
    assert torch.allclose(diffeo_exp_o(xi).coords, expected, atol=1e-12)


def test_log_o_rejects_antipode_of_origin(manifold):
    antipode = -manifold.origin()
    with pytest.raises(CutLocusError):
        manifold.log_o(antipode)


@pytest.mark.parametrize("sig", SIGNATURES, ids=str)
@pytest.mark.parametrize("beta", [-1.0, -0.25, -4.0])
def test_exp_o_membership_random(rng, sig, beta):
    """Every exponential lands on the manifold within 1e-6."""
    m = PseudoHyperboloid(sig, beta)
    x = m.exp_o(random_tangents(m, 10_000, rng, scale=1.0))
    assert float(m.membership_error(x).max()) <= 1e-6


@pytest.mark.parametrize("sig", SIGNATURES, ids=str)
def test_exp_log_inverse_random(rng, sig):
    """exp_o(log_o(x)) = x within 1e-6 away from the cut locus."""
    m = PseudoHyperboloid(sig, -1.0)
    x = random_points(m, 10_000, rng, scale=0.4)
    assert torch.allclose(m.exp_o(m.log_o(x)), x, rtol=0, atol=1e-6)


def test_log_exp_inverse_random(rng, manifold):
    """log_o(exp_o(v)) = v for tangents whose sphere block is shorter than pi."""
    v = random_tangents(manifold, 10_000, rng, scale=0.4)
    assert torch.allclose(manifold.log_o(manifold.exp_o(v)), v, rtol=0, atol=1e-6)


def test_typed_and_tensor_maps_agree(rng, manifold):
    v = random_tangents(manifold, 10, rng)
    typed = diffeo_exp_o(TangentVector(v, manifold.signature, manifold.curvature))
    assert torch.equal(typed.coords, manifold.exp_o(v))
    assert torch.equal(diffeo_log_o(typed).coords, manifold.log_o(typed.coords))


# ============================================================================
# Projection, Norm, Origin
# ============================================================================

def test_project_example():
    x = project_to_q([2.0, 0.0, 0.0], Signature(1, 1), -1.0)
    assert x.coords.tolist() == [1.0, 0.0, 0.0]


def test_project_zero_time_block():
    with pytest.raises(PsiUndefinedError):
        project_to_q([0.0, 0.0, 1.0], Signature(1, 1), -1.0)


@pytest.mark.parametrize("sig", SIGNATURES, ids=str)
def test_project_membership_and_idempotence(rng, sig):
    m = PseudoHyperboloid(sig, -2.0)
    raw = torch.from_numpy(rng.standard_normal((10_000, sig.ambient_dim)))
    # keep the time block away from zero
    raw[:, 0] += 3.0
    once = m.project(raw)
    assert float(m.membership_error(once).max()) <= 1e-6
    twice = m.project(once)
    assert float((twice - once).abs().max()) <= 1e-12
    assert torch.equal(once[:, sig.time_dim:], raw[:, sig.time_dim:])


def test_ps_norm():
    sig = Signature(1, 1)
    assert float(ps_norm(TangentVector(torch.zeros(3), sig, -1.0))) == 0.0
    v = TangentVector([0.0, 3.0, 4.0], sig, -1.0)
    assert float(ps_norm(v)) == 5.0
    assert float(ps_norm(-2.5 * v)) == pytest.approx(12.5)


def test_origin_is_on_manifold_exactly():
    sig = Signature(9, 9)
    o = origin(sig, -1.0)
    assert o.coords.shape == (19,)
    assert torch.count_nonzero(o.coords) == 1
    assert float(o.coords[0]) == 1.0
    assert float(ps_inner(o, o, sig)) == -1.0


def test_origin_scales_with_curvature():
    o = origin(Signature(2, 2), -4.0, batch_shape=(3,))
    assert o.coords.shape == (3, 5)
    assert torch.all(o.coords[:, 0] == 2.0)


# ============================================================================
# Cosine and Numeric Policy
# ============================================================================

def test_cosine_of_zero_vector_is_zero():
    a = torch.zeros(4, dtype=torch.float64)
    b = torch.ones(4, dtype=torch.float64)
    assert float(cosine(a, b)) == 0.0
    assert float(cosine(b, 2 * b)) == pytest.approx(1.0)
    assert float(cosine(b, -b)) == pytest.approx(-1.0)


def test_numeric_policy_override_is_scoped(manifold):
    x = manifold.origin() * (1 + 1e-7)
    assert bool(manifold.contains(x))
    with numeric_policy(manifold_tol=1e-9):
        assert not bool(manifold.contains(x))
    assert bool(manifold.contains(x))


def test_everything_is_float64(manifold, rng):
    x = random_points(manifold, 5, rng)
    assert x.dtype == torch.float64
    assert manifold.log_o(x).dtype == torch.float64
