import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from acoustomech.circuit import (
    EPS0,
    MbvdParams,
    MembraneCapacitor,
    OvertoneBranch,
    construct_desk_params,
    coupling_ratio,
    dissipative_coupling_strength,
    extract_mode_params,
    finite_difference_couplings,
    impedance,
    loading_parameters,
    membrane_capacitance,
    membrane_capacitance_derivative,
    membrane_zero_point,
    mode_window,
    network_coupling_ratio,
    network_resonance,
    reflection_s11,
)
from acoustomech.errors import (
    ConfigError,
    GapClosureError,
    OverlappingModesError,
    PhysicsDomainError,
    StepTooSmallError,
    ValidityWarning,
)

TWO_PI = 2 * np.pi
X_ZPF = 1.2312e-15


def _huge_caps(R_L, R_au, R_0, L=1e-7, C=3e-14):
    # capacitive reactances of C_m and C_0 negligible at GHz
    mem = MembraneCapacitor(d_gap=1e-6, area=1e6, permittivity=EPS0)
    return MbvdParams(R_L=R_L, membrane=mem, branches=(OvertoneBranch(L, C, R_au),), R_0=R_0, C_0=1e3)


def test_branch_reactance_cancels_at_series_resonance():
    b = OvertoneBranch(1.0906e-7, 3.09e-14, 0.0486)
    z = b.impedance(b.omega)
    assert z.real == pytest.approx(0.0486, rel=1e-12)
    assert abs(z.imag) < 1e-9 * b.omega * b.L_au


def test_reactance_free_limit_is_resistive_parallel():
    p = _huge_caps(0.2, 0.05, 0.3)
    w = p.branches[0].omega
    expect = 0.2 + 0.05 * 0.3 / 0.35
    assert impedance(p, w) == pytest.approx(expect, rel=1e-9)


def test_open_dielectric_branch_gives_series_rlc():
    p = replace(_huge_caps(0.2, 0.05, np.inf), membrane=MembraneCapacitor(1e-6, 2e-8, EPS0))
    w = np.linspace(0.9, 1.1, 7) * p.branches[0].omega
    cm = membrane_capacitance(p.membrane)
    b = p.branches[0]
    expect = p.R_L + 1 / (1j * w * cm) + b.R_au + 1j * w * b.L_au + 1 / (1j * w * b.C_au)
    assert np.allclose(impedance(p, w), expect, rtol=1e-12, atol=0)


def test_matched_and_open_reflection():
    p = _huge_caps(49.0, 1.0, np.inf)
    assert abs(reflection_s11(p, p.branches[0].omega)) < 1e-9
    q = p.with_membrane(area=1e-30)
    assert abs(reflection_s11(q, 1e9) - 1.0) < 1e-6


def test_desk_set_has_deep_dip(desk):
    w = mode_window(desk, n_points=20001, span=8.0)
    depth = -20 * np.log10(np.min(np.abs(reflection_s11(desk, w))))
    assert depth > 30


def test_passivity_random_frequencies(desk, rng):
    w = rng.uniform(1e6, 2e10, 10_000) * TWO_PI
    assert np.max(np.abs(reflection_s11(desk, w))) <= 1 + 1e-12


@given(
    st.floats(0.0, 100.0), st.floats(1e-4, 100.0), st.floats(0.0, 100.0), st.floats(1e-13, 1e-9),
    st.floats(1e-9, 1e-6), st.floats(1e-16, 1e-12), st.floats(-0.9, 0.9), st.floats(1e7, 1e11),
)
def test_passivity_property(R_L, R_au, R_0, C_0, L, C, xf, w):
    mem = MembraneCapacitor(d_gap=1e-6, area=1e-8, x=xf * 1e-6)
    p = MbvdParams(R_L=R_L, membrane=mem, branches=(OvertoneBranch(L, C, R_au),), R_0=R_0, C_0=C_0)
    assert abs(reflection_s11(p, w)) <= 1 + 1e-12


def test_impedance_domain_errors(desk):
    with pytest.raises(PhysicsDomainError):
        impedance(desk, 0.0)
    with pytest.raises(GapClosureError):
        impedance(desk, 1e10, x=desk.membrane.d_gap)
    with pytest.raises(ConfigError):
        OvertoneBranch(0.0, 1e-14, 1.0)


def test_capacitance_laws():
    cap = MembraneCapacitor(d_gap=1e-6, area=1e-8)
    c0 = membrane_capacitance(cap)
    assert c0 == pytest.approx(EPS0 * 1e-8 / 1e-6, rel=1e-15)
    assert membrane_capacitance(cap, 0.5e-6) == pytest.approx(2 * c0, rel=1e-12)
    with pytest.raises(GapClosureError):
        membrane_capacitance(cap, -1e-6)


@given(st.floats(-0.9, 0.9))
def test_capacitance_derivative_matches_difference(xf):
    cap = MembraneCapacitor(d_gap=1e-6, area=1e-8)
    x = xf * cap.d_gap
    h = 1e-6 * cap.d_gap
    fd = (membrane_capacitance(cap, x + h) - membrane_capacitance(cap, x - h)) / (2 * h)
    an = membrane_capacitance_derivative(cap, x)
    assert abs(fd - an) / an < 1e-6


@given(st.floats(-0.8, 0.8), st.floats(-0.8, 0.8))
def test_capacitance_monotone(x1, x2):
    cap = MembraneCapacitor(d_gap=1e-6, area=1e-8)
    if x2 - x1 > 1e-9:
        assert membrane_capacitance(cap, x1 * 1e-6) < membrane_capacitance(cap, x2 * 1e-6)


def test_frozen_capacitor_has_no_derivative():
    cap = MembraneCapacitor(d_gap=1e-6, area=1e-8, frozen=True)
    assert membrane_capacitance_derivative(cap, 0.3e-6) == 0.0
    assert membrane_capacitance(cap, 0.3e-6) == membrane_capacitance(cap, 0.0)


def test_coupling_ratio_examples():
    assert coupling_ratio(0.25, 0.0) == pytest.approx(1.0, rel=1e-15)
    assert coupling_ratio(0.5, 0.0) == pytest.approx(0.5, rel=1e-15)
    for bad in [(0.0, 0.0), (0.3, 1.0), (0.3, -0.1)]:
        with pytest.raises(PhysicsDomainError):
            coupling_ratio(*bad)


@given(st.floats(1e-3, 0.3), st.floats(0.0, 0.05))
def test_network_ratio_reduces_to_closed_form_at_small_loading(beta, eta):
    # leading order agreement: relative difference is O(beta*eta, beta^2)
    rel = abs(network_coupling_ratio(beta, eta) / coupling_ratio(beta, eta) - 1)
    assert rel <= 2 * beta * beta + beta * eta + eta + 1e-12


def test_network_ratio_matches_finite_differences(desk):
    beta, eta = loading_parameters(desk)
    gd, gs = finite_difference_couplings(desk, x_zpf=X_ZPF, method="poles")
    assert abs(abs(gd / gs) / network_coupling_ratio(beta, eta) - 1) < 2e-3
    gd2, gs2 = finite_difference_couplings(desk, x_zpf=X_ZPF, method="fit")
    assert abs(gd2 / gd - 1) < 1e-2 and abs(gs2 / gs - 1) < 1e-2


def test_dissipative_dominates_above_quarter(desk):
    beta, _ = loading_parameters(desk)
    assert beta > 0.25
    gd, gs = finite_difference_couplings(desk, x_zpf=X_ZPF)
    assert abs(gs) > abs(gd)


def test_frozen_capacitor_gives_zero_couplings(desk):
    p = desk.with_membrane(frozen=True)
    assert finite_difference_couplings(p, x_zpf=X_ZPF, method="poles") == (0.0, 0.0)
    gd, gs = finite_difference_couplings(p, x_zpf=X_ZPF)
    assert abs(gd) < 1e-12 and abs(gs) < 1e-12


def test_step_too_small(desk):
    with pytest.raises(StepTooSmallError):
        finite_difference_couplings(desk, h=1e-10 * desk.membrane.d_gap)


def test_closed_form_gdiss_examples(desk):
    assert dissipative_coupling_strength(desk, x_zpf=0.0) == 0.0
    g1 = dissipative_coupling_strength(desk, x_zpf=X_ZPF, include_port=False)
    g2 = dissipative_coupling_strength(replace(desk, R_L=2 * desk.R_L), x_zpf=X_ZPF, include_port=False)
    assert g2 == pytest.approx(2 * g1, rel=1e-12)
    g = dissipative_coupling_strength(desk, x_zpf=X_ZPF) / TWO_PI
    assert 0.1 * 0.059 < g < 10 * 0.059


def test_closed_form_gdiss_warns_outside_regime(desk):
    p = replace(desk, C_0=desk.C_0 * 0.05)
    with pytest.warns(ValidityWarning):
        dissipative_coupling_strength(p, x_zpf=X_ZPF)


def test_desk_mode_parameters(desk):
    m, fit = extract_mode_params(desk, return_fit=True)
    assert m.omega_res / TWO_PI == pytest.approx(2.7454e9, rel=1e-9)
    assert m.kappa_in / TWO_PI == pytest.approx(72.5e3, rel=1e-6)
    assert m.kappa_ex / TWO_PI == pytest.approx(72.93e3, rel=1e-6)
    assert abs(m.Q / 1.89e4 - 1) < 0.01
    assert abs(m.Q * (m.kappa_in + m.kappa_ex) / m.omega_res - 1) < 1e-9
    assert fit.converged


def test_resonance_within_half_step_of_minimum(desk):
    w = mode_window(desk)
    m = extract_mode_params(desk)
    i = int(np.argmin(np.abs(reflection_s11(desk, w))))
    assert abs(w[i] - m.omega_res) <= 0.5 * (w[1] - w[0])


def test_lossless_branch_has_no_internal_rate(desk):
    # every non-port loss counts as internal in a reflection fit, so the
    # limit needs the series and dielectric resistors lossless as well
    p = replace(desk.with_branch(0, R_au=1e-9 * desk.branches[0].R_au), R_L=0.0, R_0=0.0)
    m = extract_mode_params(p)
    assert m.kappa_in < 1e-6 * m.kappa_ex
    q = desk.with_branch(0, R_au=1e-9 * desk.branches[0].R_au)
    assert extract_mode_params(q).kappa_in < 0.05 * extract_mode_params(desk).kappa_in


def test_overlapping_modes(desk):
    b = desk.branches[0]
    near = OvertoneBranch(b.L_au, b.C_au / (1 + 2e-4) ** 2, b.R_au)
    with pytest.raises(OverlappingModesError):
        extract_mode_params(replace(desk, branches=(b, near)))


@given(st.floats(0.5, 2.0), st.floats(0.5, 2.0), st.floats(0.5, 2.0))
def test_extraction_grid_refinement(fl, fc, fr):
    # random branch: the fitted resonance agrees with the network pole and
    # does not move when the grid is refined tenfold
    import acoustomech.circuit as c
    p = c.desk_params()
    b = p.branches[0]
    p = p.with_branch(0, L_au=b.L_au * fl, C_au=b.C_au * fc, R_au=b.R_au * fr)
    m1 = extract_mode_params(p)
    m2 = extract_mode_params(p, n_points=16001)
    pole = network_resonance(p)
    bare = p.branches[0].omega
    assert abs(m1.omega_res - m2.omega_res) < 1e-3 * m1.kappa
    assert abs(m1.omega_res - pole.omega_pole) < 5e-3 * m1.kappa
    # pulling away from the bare branch frequency is real and finite
    assert abs(m1.omega_res - bare) < 0.02 * bare


def test_pole_zero_partition_matches_fit(desk):
    r = network_resonance(desk)
    m = extract_mode_params(desk)
    # the fit window sees the slowly varying background, the poles do not
    assert r.kappa_ex == pytest.approx(m.kappa_ex, rel=1e-3)
    assert r.kappa_in == pytest.approx(m.kappa_in, rel=1e-3)


def test_construction_reproduces_targets():
    p = construct_desk_params(kappa_in=TWO_PI * 40e3, kappa_ex=TWO_PI * 90e3, beta=0.5)
    m = extract_mode_params(p)
    assert m.omega_res / TWO_PI == pytest.approx(2.7454e9, rel=1e-9)
    assert m.kappa_in / TWO_PI == pytest.approx(40e3, rel=1e-4)
    assert m.kappa_ex / TWO_PI == pytest.approx(90e3, rel=1e-4)
    # beta is set at the target frequency, the loading numbers use the bare branch
    assert loading_parameters(p)[0] == pytest.approx(0.5, rel=2e-3)


def test_frozen_desk_matches_construction(desk):
    fresh = construct_desk_params()
    assert fresh.branches[0].L_au == pytest.approx(desk.branches[0].L_au, rel=1e-12)
    assert fresh.C_0 == pytest.approx(desk.C_0, rel=1e-12)


def test_zero_point_scale():
    assert membrane_zero_point(TWO_PI * 571.5e3) == pytest.approx(1.2312e-15, rel=1e-4)
