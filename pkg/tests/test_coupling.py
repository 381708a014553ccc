import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from oracles import chain_matrices, dense_compliance
from equalpeak.coupling import (AbsorberSet, ComplianceChannel, absorber_dynamic_stiffness,
                                compliance_and_derivative, compliance_frequency_derivative,
                                compliance_param_gradient, compliance_param_gradients,
                                compliance_sweep, controlled_compliance,
                                direct_compliance_oracle, modal_system_matrices,
                                pseudo_inverse_compliance)
from equalpeak.errors import (AbsorberSingularityError, GradientUndefinedError,
                              InvalidModelError, KernelUncoupledError, SingularHostError)
from equalpeak.host import ChainSpec, build_chain_modal, build_plate_modal, host_flexibility_apply


def chain_case(masses, springs, dampers=None):
    spec = ChainSpec(tuple(masses), tuple(springs), None if dampers is None else tuple(dampers))
    return build_chain_modal(spec), chain_matrices(masses, springs, dampers)


def reference(mats, ab, wu, wf, w):
    M, C, K = mats
    return dense_compliance(M, C, K, ab.masses, ab.dampings, ab.stiffnesses, ab.dofs, wu, wf, w)


# -- absorber feedback ----------------------------------------------------------

def test_absorber_feedback_vanishes_at_zero_frequency():
    ab = AbsorberSet([0.05, 0.1], [0.01, 0.0], [0.04, 0.2], (0, 1))
    np.testing.assert_array_equal(absorber_dynamic_stiffness(ab, 0.0), [0, 0])


def test_massless_absorber_has_no_feedback():
    ab = AbsorberSet([0.0], [0.3], [2.0], (0,))
    for w in (0.3, 1.0, 7.0):
        assert absorber_dynamic_stiffness(ab, w)[0] == 0


def test_absorber_feedback_by_condensation():
    m, c, k, w = 0.05, 0.0128, 0.0454, 1.0
    ab = AbsorberSet([m], [c], [k], (0,))
    z = k + 1j * w * c
    # two-dof block [[z, -z], [-z, z - w^2 m]]; eliminate the absorber coordinate
    Z = np.array([[z, -z], [-z, z - w**2 * m]])
    condensed = Z[0, 0] - Z[0, 1] * Z[1, 0] / Z[1, 1]
    assert absorber_dynamic_stiffness(ab, w)[0] == pytest.approx(condensed, rel=1e-14)


def test_undamped_absorber_at_own_frequency():
    ab = AbsorberSet([1.0], [0.0], [4.0], (0,))
    with pytest.raises(AbsorberSingularityError):
        absorber_dynamic_stiffness(ab, 2.0)
    # the Woodbury path only needs the inverse, which is regular there
    model, mats = chain_case([1.0], [1.0], [0.1])
    ch = ComplianceChannel.point(1, 0, 0)
    h = controlled_compliance(model, ab, ch, 2.0)
    assert h == pytest.approx(reference(mats, ab, [1.0], [1.0], 2.0), rel=1e-12)


def test_absorber_validation():
    with pytest.raises(InvalidModelError):
        AbsorberSet([0.1], [0.0], [0.0], (0,))
    with pytest.raises(InvalidModelError):
        AbsorberSet([-0.1], [0.1], [1.0], (0,))
    with pytest.raises(InvalidModelError):
        AbsorberSet([0.1, 0.2], [0.1], [1.0], (0,))
    ab = AbsorberSet([0.0], [0.0], [0.0], (0,))  # unattached and massless is allowed
    assert ab.total_mass == 0.0


def test_params_round_trip():
    ab = AbsorberSet([0.1, 0.2], [0.01, 0.02], [1.0, 2.0], (3, 1))
    back = AbsorberSet.from_params(ab.params(), ab.dofs)
    np.testing.assert_array_equal(back.params(), ab.params())
    np.testing.assert_array_equal(ab.params(), [0.1, 0.01, 1.0, 0.2, 0.02, 2.0])


# -- compliance -----------------------------------------------------------------

def test_no_absorber_gives_host_compliance(two_dof):
    ch = ComplianceChannel.point(2, 0, 1)
    for w in (0.3, 1.4, 2.5):
        ref = ch.w_u @ host_flexibility_apply(two_dof, w, ch.w_f)
        assert controlled_compliance(two_dof, AbsorberSet.empty(), ch, w) == pytest.approx(ref, rel=1e-14)


def test_zero_frequency_is_static(two_dof):
    ab = AbsorberSet([0.05, 0.05], [0.01, 0.002], [0.05, 0.1], (0, 1))
    ch = ComplianceChannel.point(2, 0, 0)
    _, _, K = chain_matrices([1, 1], [1, 1, 1])
    assert controlled_compliance(two_dof, ab, ch, 0.0) == pytest.approx(np.linalg.inv(K)[0, 0], rel=1e-14)


def test_two_dof_two_absorbers_random_frequencies(two_dof, rng):
    mats = chain_matrices([1, 1], [1, 1, 1])
    M, C, K = mats
    ch = ComplianceChannel.point(2, 0, 0)
    for _ in range(5):
        ab = AbsorberSet(rng.uniform(0.01, 0.2, 2), rng.uniform(0.001, 0.05, 2),
                         rng.uniform(0.01, 0.5, 2), (0, 1))
        for w in rng.uniform(0.2, 3.0, 10):
            h = controlled_compliance(two_dof, ab, ch, w)
            ref = reference(mats, ab, ch.w_u, ch.w_f, w)
            lib = direct_compliance_oracle(M, C, K, ab, ch.w_u, ch.w_f, w)
            assert abs(h - ref) <= 1e-10 * max(1.0, abs(ref))
            assert abs(lib - ref) <= 1e-12 * max(1.0, abs(ref))


@st.composite
def chain_instances(draw):
    n = draw(st.integers(1, 6))
    na = draw(st.integers(1, 4))
    pos = st.floats(0.1, 10.0)
    masses = draw(st.lists(pos, min_size=n, max_size=n))
    springs = draw(st.lists(pos, min_size=n + 1, max_size=n + 1))
    damped = draw(st.booleans())
    dampers = [0.02 * s for s in springs] if damped else None
    dofs = tuple(draw(st.lists(st.integers(0, n - 1), min_size=na, max_size=na)))
    m = draw(st.lists(st.floats(1e-3, 0.5), min_size=na, max_size=na))
    c = draw(st.lists(st.floats(0.0, 0.5), min_size=na, max_size=na))
    k = draw(st.lists(st.floats(1e-2, 5.0), min_size=na, max_size=na))
    w = draw(st.floats(0.05, 5.0))
    return masses, springs, dampers, AbsorberSet(m, c, k, dofs), w


@given(chain_instances(), st.data())
def test_woodbury_matches_dense_assembly(inst, data):
    masses, springs, dampers, ab, w = inst
    model, mats = chain_case(masses, springs, dampers)
    n = len(masses)
    out = data.draw(st.integers(0, n - 1))
    inp = data.draw(st.integers(0, n - 1))
    ch = ComplianceChannel.point(n, out, inp)
    if dampers is None and np.min(np.abs(model.frequencies - w) / model.frequencies) < 1e-6:
        return
    ref = reference(mats, ab, ch.w_u, ch.w_f, w)
    h = controlled_compliance(model, ab, ch, w)
    assert abs(h - ref) <= 1e-10 * max(1.0, abs(ref))
    # reciprocity of the controlled structure
    assert abs(controlled_compliance(model, ab, ch.swapped(), w) - h) <= 1e-12 * max(abs(h), 1e-300)


def test_conjugate_symmetry(rng):
    model, _ = chain_case([1.0, 1.5, 0.7], [1.0, 2.0, 1.0, 0.5], [0.02, 0.04, 0.02, 0.01])
    ab = AbsorberSet([0.05, 0.1], [0.01, 0.02], [0.3, 0.2], (0, 2))
    ch = ComplianceChannel.point(3, 1, 0)
    for w in rng.uniform(0.1, 3.0, 10):
        assert controlled_compliance(model, ab, ch, -w) == pytest.approx(
            np.conj(controlled_compliance(model, ab, ch, w)), rel=1e-13)


def test_dropped_absorbers_below_mass_floor(two_dof):
    ch = ComplianceChannel.point(2, 0, 0)
    full = AbsorberSet([0.05, 1e-16], [0.01, 5.0], [0.05, 3.0], (0, 1))
    only = AbsorberSet([0.05], [0.01], [0.05], (0,))
    assert controlled_compliance(two_dof, full, ch, 0.8, mass_floor=1e-14) == pytest.approx(
        controlled_compliance(two_dof, only, ch, 0.8), rel=1e-14)


def test_no_dense_host_factorization(plate_spec, monkeypatch):
    model = build_plate_modal(plate_spec)
    ab = AbsorberSet([0.03, 0.02, 0.01], [0.5, 0.4, 0.1], [50.0, 100.0, 90.0],
                     tuple(model.dof_at(*p) for p in plate_spec.absorber_locations))
    ch = ComplianceChannel.point(model.n_dofs, 1, 0)
    sizes = []
    real_lu = scipy.linalg.lu_factor

    def spy(a, *args, **kw):
        sizes.append(np.shape(a))
        return real_lu(a, *args, **kw)

    def forbidden(*args, **kw):
        raise AssertionError("dense solve on the host")

    monkeypatch.setattr(scipy.linalg, "lu_factor", spy)
    monkeypatch.setattr(scipy.linalg, "solve", forbidden)
    monkeypatch.setattr(scipy.linalg, "inv", forbidden)
    monkeypatch.setattr(np.linalg, "inv", forbidden)
    controlled_compliance(model, ab, ch, 40.0)
    assert sizes and all(s == (3, 3) for s in sizes)


def test_channel_mismatch(two_dof):
    ab = AbsorberSet([0.05], [0.01], [0.05], (5,))
    with pytest.raises(InvalidModelError):
        controlled_compliance(two_dof, ab, ComplianceChannel.point(2, 0, 0), 1.2)
    with pytest.raises(InvalidModelError):
        ComplianceChannel([0.0, 0.0], [1.0, 0.0])


def test_sweep_matches_pointwise(two_dof, rng):
    ab = AbsorberSet([0.06, 0.04], [0.02, 0.002], [0.07, 0.12], (0, 1))
    ch = ComplianceChannel.point(2, 0, 0, normalization=2.0)
    w = np.concatenate([np.linspace(0.0, 2.5, 301), [1.0, np.sqrt(3.0)]])
    h = compliance_sweep(two_dof, ab, ch, w, normalize=True)
    ref = [controlled_compliance(two_dof, ab, ch, x, normalize=True) for x in w]
    np.testing.assert_allclose(h, ref, rtol=1e-12)


# -- parameter gradients ----------------------------------------------------------

def _fd_param(model, ab, ch, w, i, rel=1e-6):
    xi = ab.params()
    step = rel * xi[i]
    up, dn = xi.copy(), xi.copy()
    up[i] += step
    dn[i] -= step
    return (controlled_compliance(model, ab.with_params(up), ch, w)
            - controlled_compliance(model, ab.with_params(dn), ch, w)) / (2 * step)


def test_parameter_gradients_match_finite_differences(rng):
    model, _ = chain_case([1.0, 1.2, 0.8], [1.0, 1.5, 1.0, 0.7], [0.01, 0.015, 0.01, 0.007])
    ch = ComplianceChannel.point(3, 0, 2)
    for _ in range(6):
        ab = AbsorberSet(rng.uniform(0.02, 0.1, 2), rng.uniform(0.005, 0.05, 2),
                         rng.uniform(0.05, 1.0, 2), (0, 2))
        w = rng.uniform(0.3, 2.0)
        h, grad = compliance_param_gradients(model, ab, ch, w)
        assert abs(h) > 1e-12
        for i in range(6):
            fd = _fd_param(model, ab, ch, w, i)
            assert abs(grad[i] - fd) <= 1e-5 * max(abs(fd), 1e-8 * abs(h) / ab.params()[i])


def test_single_parameter_gradient_and_naming(two_dof):
    ab = AbsorberSet([0.05, 0.05], [0.01, 0.002], [0.05, 0.15], (0, 1))
    ch = ComplianceChannel.point(2, 0, 0)
    _, grad = compliance_param_gradients(two_dof, ab, ch, 0.9)
    assert compliance_param_gradient(two_dof, ab, ch, 0.9, (1, "c")) == grad[4]
    assert compliance_param_gradient(two_dof, ab, ch, 0.9, 2) == grad[2]


def test_detuned_absorbers_still_cross_couple(two_dof):
    ab = AbsorberSet([0.05, 0.05], [0.01, 0.01], [1e4, 0.15], (0, 1))
    ch = ComplianceChannel.point(2, 0, 0)
    _, grad = compliance_param_gradients(two_dof, ab, ch, 1.1)
    for i in (3, 4, 5):
        fd = _fd_param(two_dof, ab, ch, 1.1, i)
        assert abs(fd) > 0
        assert grad[i] == pytest.approx(fd, rel=1e-5)


def test_gradient_linear_in_forcing(two_dof):
    ab = AbsorberSet([0.05, 0.05], [0.01, 0.002], [0.05, 0.15], (0, 1))
    a = ComplianceChannel([1.0, 0.0], [0.3, -0.4])
    b = ComplianceChannel([1.0, 0.0], [0.75, -1.0])
    _, g1 = compliance_param_gradients(two_dof, ab, a, 1.3)
    _, g2 = compliance_param_gradients(two_dof, ab, b, 1.3)
    np.testing.assert_allclose(g2, 2.5 * g1, rtol=1e-13)


def test_gradient_errors(two_dof):
    ch = ComplianceChannel.point(2, 0, 0)
    ab = AbsorberSet([0.05, 0.0], [0.01, 0.01], [0.05, 0.1], (0, 1))
    with pytest.raises(GradientUndefinedError):
        compliance_param_gradients(two_dof, ab, ch, 1.2)
    live = AbsorberSet([0.05], [0.01], [0.05], (0,))
    with pytest.raises(GradientUndefinedError):
        compliance_param_gradients(two_dof, live, ch, 0.0)
    with pytest.raises(SingularHostError):
        compliance_param_gradients(two_dof, live, ch, 1.0)


# -- frequency derivative --------------------------------------------------------------

def test_frequency_derivative_fourth_order(two_dof, rng):
    ab = AbsorberSet([0.06, 0.04], [0.02, 0.002], [0.07, 0.12], (0, 1))
    ch = ComplianceChannel.point(2, 0, 0)

    def h(x):
        return controlled_compliance(two_dof, ab, ch, x)

    for w in rng.uniform(0.3, 2.5, 50):
        if np.min(np.abs(two_dof.frequencies - w)) < 1e-3:
            continue
        d = 1e-4 * w
        fd = (-h(w + 2 * d) + 8 * h(w + d) - 8 * h(w - d) + h(w - 2 * d)) / (12 * d)
        an = compliance_frequency_derivative(two_dof, ab, ch, w)
        assert abs(an - fd) <= 1e-6 * abs(an)


def test_derivative_real_for_undamped_system():
    model = build_chain_modal(ChainSpec((1.0,), (1.0,)))
    ab = AbsorberSet([0.05], [0.0], [0.045], (0,))
    ch = ComplianceChannel.point(1, 0, 0)
    h, dh = compliance_and_derivative(model, ab, ch, 0.7)
    assert h.imag == 0 and dh.imag == 0


def test_derivative_through_removable_singularity(two_dof):
    ab = AbsorberSet([0.05, 0.05], [0.01, 0.002], [0.05, 0.15], (0, 1))
    ch = ComplianceChannel.point(2, 0, 0)
    _, at = compliance_and_derivative(two_dof, ab, ch, 1.0)
    def h(x):
        return controlled_compliance(two_dof, ab, ch, x)

    d = 1e-3
    fd = (-h(1 + 2 * d) + 8 * h(1 + d) - 8 * h(1 - d) + h(1 - 2 * d)) / (12 * d)
    assert abs(at - fd) <= 1e-6 * abs(fd)


# -- pseudo-inverse route -----------------------------------------------------------------

@pytest.mark.parametrize("dofs", [(0,), (1,), (0, 1)])
@pytest.mark.parametrize("mode", [0, 1])
def test_pseudo_inverse_matches_dense_pinv(two_dof, dofs, mode):
    na = len(dofs)
    ab = AbsorberSet([0.05] * na, [0.01, 0.003][:na], [0.05, 0.12][:na], dofs)
    ch = ComplianceChannel.point(2, 0, 1)
    wk = two_dof.frequencies[mode]
    M, C, K = chain_matrices([1, 1], [1, 1, 1])
    n = 2
    Z = np.zeros((n + na, n + na), dtype=complex)
    Z[:n, :n] = K - wk**2 * M
    for a, d in enumerate(dofs):
        z = ab.stiffnesses[a] + 1j * wk * ab.dampings[a]
        Z[d, d] += z
        Z[n + a, n + a] = z - wk**2 * ab.masses[a]
        Z[d, n + a] = Z[n + a, d] = -z
    rhs = np.zeros(n + na)
    rhs[1] = 1.0
    ref = (np.linalg.pinv(Z) @ rhs)[0]
    h = pseudo_inverse_compliance(two_dof, ab, ch, wk)
    assert abs(h - ref) <= 1e-8 * abs(ref)
    # routed automatically inside the window
    assert controlled_compliance(two_dof, ab, ch, wk) == h


def test_pseudo_inverse_continuity(two_dof):
    ab = AbsorberSet([0.05, 0.05], [0.01, 0.002], [0.05, 0.15], (0, 1))
    ch = ComplianceChannel.point(2, 0, 0)
    for wk in two_dof.frequencies:
        h = pseudo_inverse_compliance(two_dof, ab, ch, wk)
        for side in (-1, 1):
            off = controlled_compliance(two_dof, ab, ch, wk * (1 + side * 1e-6))
            assert abs(off - h) <= 1e-4 * abs(h)
    with pytest.raises(SingularHostError):
        controlled_compliance(two_dof, ab, ch, 1.0, route_singular=False)


def test_pseudo_inverse_refuses_damped_host():
    model, _ = chain_case([1.0, 1.0], [1.0, 1.0, 1.0], [0.1, 0.1, 0.1])
    ab = AbsorberSet([0.05], [0.01], [0.05], (0,))
    with pytest.raises(InvalidModelError):
        pseudo_inverse_compliance(model, ab, ComplianceChannel.point(2, 0, 0), 1.0)


def test_pseudo_inverse_requires_window(two_dof):
    ab = AbsorberSet([0.05], [0.01], [0.05], (0,))
    with pytest.raises(InvalidModelError):
        pseudo_inverse_compliance(two_dof, ab, ComplianceChannel.point(2, 0, 0), 1.2)


def test_kernel_uncoupled_absorber_on_node():
    # middle mass of a symmetric three-mass chain is a node of mode 2
    model, _ = chain_case([1.0, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0])
    ab = AbsorberSet([0.05], [0.01], [0.05], (1,))
    ch = ComplianceChannel.point(3, 0, 0)
    with pytest.raises(KernelUncoupledError):
        pseudo_inverse_compliance(model, ab, ch, model.frequencies[1])


def test_modal_oracle_on_plate(plate_spec, rng):
    model = build_plate_modal(plate_spec)
    ab = AbsorberSet([0.03, 0.02, 0.01], [0.5, 0.4, 0.1], [50.0, 100.0, 90.0],
                     tuple(model.dof_at(*p) for p in plate_spec.absorber_locations))
    ch = ComplianceChannel.point(model.n_dofs, 1, 0)
    M, C, K, B, wu, wf = modal_system_matrices(model, ab, ch)
    for w in rng.uniform(20.0, 200.0, 10):
        ref = direct_compliance_oracle(M, C, K, ab, wu, wf, w, B=B)
        h = controlled_compliance(model, ab, ch, w)
        assert abs(h - ref) <= 1e-10 * max(1.0, abs(ref))
