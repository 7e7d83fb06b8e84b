import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

import oracles
from quartetsim import polarization as pol
from quartetsim import spectra as sp
from quartetsim import spincore as sc

TABLE_PARAMS = pol.QuartetPolarizationParams(a=(0.11, -0.002, -0.027), r=(0.0, -0.01, 0.0))
TABLE_NUCLEAR = pol.NuclearPopulations(
    (0.146, 0.078, 0.194, 0.126, 0.117, 0.165, 0.078, 0.097)
)
TABLE_MODEL = pol.PhotoQuartetPolarization(TABLE_PARAMS, TABLE_NUCLEAR)

# coarse but fast sweep for engine-level checks
FAST_SWEEP = sp.FieldSweepConfig(n_points=512, search_points=301)


# ----------------------------------------------------------- configuration


def test_sweep_config_validation():
    sweep = sp.FieldSweepConfig()
    axis = sweep.field_axis()
    assert axis[0] == 240.0 and axis[-1] == 440.0 and len(axis) == 1024
    assert sweep.mw_frequency_mhz() == 9500.0
    for kwargs in (
        dict(mw_frequency_ghz=0.0),
        dict(field_start_mt=400.0, field_stop_mt=300.0),
        dict(field_start_mt=-10.0),
        dict(n_points=1),
        dict(lineshape="voigt"),
        dict(linewidth_mt=0.0),
        dict(search_points=4),
        dict(slope_floor_ghz_per_mt=0.0),
    ):
        with pytest.raises(ValueError):
            sp.FieldSweepConfig(**kwargs)


def test_scheme_validation():
    with pytest.raises(ValueError):
        sp.PowderScheme(8)
    with pytest.raises(ValueError):
        sp.AlignedScheme("diagonal")
    with pytest.raises(ValueError):
        sp.AlignedScheme("parallel", sigma_deg=-1.0)
    with pytest.raises(ValueError):
        sp.AlignedScheme("parallel", n_samples=4)


# ------------------------------------------------------- orientation grids


def test_powder_orientations_cover_hemisphere():
    orientations, weights = sp.powder_orientations(128)
    assert len(orientations) == 128
    assert math.isclose(weights.sum(), 1.0, rel_tol=1e-12)
    z = np.array([o.unit_vector()[2] for o in orientations])
    assert (z > 0).all() and (z <= 1).all()
    # equal-area in cos(theta): sorted values fill (0, 1] uniformly
    assert_allclose(np.sort(z), (np.arange(128) + 0.5) / 128, atol=1e-12)


def test_aligned_parallel_zero_width_is_bond_direction():
    orientations, weights = sp.aligned_orientations(sp.AlignedScheme("parallel", sigma_deg=0.0))
    assert len(orientations) == 1 and weights[0] == 1.0
    assert_allclose(orientations[0].unit_vector(), [0.0, 1.0, 0.0], atol=1e-12)


def test_aligned_perpendicular_zero_width_avoids_bond():
    scheme = sp.AlignedScheme("perpendicular", sigma_deg=0.0, n_samples=12)
    orientations, weights = sp.aligned_orientations(scheme)
    assert math.isclose(weights.sum(), 1.0, rel_tol=1e-12)
    for o in orientations:
        assert abs(o.unit_vector()[1]) < 1e-12


def test_aligned_orientations_deduplicate():
    par = sp.AlignedScheme("parallel")
    perp = sp.AlignedScheme("perpendicular")
    for scheme, raw in ((par, 9 * 16), (perp, 9 * 8 * 16)):
        orientations, weights = sp.aligned_orientations(scheme)
        assert len(orientations) < raw  # antipodal/duplicate nodes merged
        assert math.isclose(weights.sum(), 1.0, rel_tol=1e-10)
        assert (weights > 0).all()


def test_scheme_orientations_single():
    orientations, weights = sp.scheme_orientations(sp.SingleOrientationScheme(1.0, 2.0))
    assert len(orientations) == 1 and weights[0] == 1.0
    assert orientations[0].theta == 1.0 and orientations[0].phi == 2.0


# --------------------------------------------------------- resonance search


def _doublet_search(g_z, a_z, sweep):
    """16-dim S=1/2 (x) I=7/2 system with purely secular coupling along z."""
    sz = sc.spin_operators(0.5)[2]
    sx, sy = sc.spin_operators(0.5)[:2]
    iz = sc.spin_operators(3.5)[2]
    h0 = a_z * np.kron(sz, iz)
    h1 = g_z * 13.9962449361 * np.kron(sz, np.eye(8))
    sa = np.kron(sx, np.eye(8))
    sb = np.kron(sy, np.eye(8))
    return sp.find_resonances(h0, h1, sweep, sp.ThermalChannel(295.0), (sa, sb))


def test_isolated_doublet_resonance_field():
    sweep = sp.FieldSweepConfig(field_start_mt=300, field_stop_mt=380, search_points=101)
    sticks, diag = _doublet_search(2.0023, 0.0, sweep)
    fields = sorted({round(s.field_mt, 6) for s in sticks})
    assert len(fields) == 1
    assert math.isclose(fields[0], oracles.isolated_doublet_field(9500.0, 2.0023), abs_tol=1e-6)
    assert diag.n_sticks == len(sticks)


def test_hyperfine_octet_positions_match_first_order_formula():
    sweep = sp.FieldSweepConfig(field_start_mt=280, field_stop_mt=400, search_points=241)
    sticks, _ = _doublet_search(1.964, 475.0, sweep)
    fields = np.array(sorted(s.field_mt for s in sticks))
    expected = np.sort(oracles.doublet_resonance_fields(9500.0, 1.964, 475.0))
    assert len(fields) == 8
    # transition frequencies are linear in B here, so interpolation is exact
    assert_allclose(fields, expected, atol=1e-6)
    spacing = np.diff(fields)
    assert_allclose(spacing, spacing[0], rtol=1e-9)
    for s in sticks:
        assert s.amplitude > 0  # thermal populations absorb


def test_thermal_dimer_sticks_absorptive():
    spec = sc.vanadyl_porphyrin_dimer()
    sticks = sp.stick_spectrum(
        spec, sc.LabOrientation(1.0, 0.4), pol.ThermalPolarization(80.0), FAST_SWEEP
    )
    assert sticks
    assert all(s.amplitude >= 0 for s in sticks)
    assert all(s.electron_m is not None and s.nuclear_m is not None for s in sticks)


def test_photo_dimer_sticks_have_both_signs():
    spec = sc.vanadyl_porphyrin_dimer()
    sticks = sp.stick_spectrum(spec, sc.LabOrientation(1.0, 0.4), TABLE_MODEL, FAST_SWEEP)
    amps = np.array([s.amplitude for s in sticks])
    assert (amps > 0).any() and (amps < 0).any()


# -------------------------------------------------------------- lineshapes


@pytest.mark.parametrize("shape", ["lorentzian", "gaussian"])
def test_convolution_preserves_stick_area(shape):
    sweep = sp.FieldSweepConfig(
        field_start_mt=200, field_stop_mt=480, n_points=4001, lineshape=shape, linewidth_mt=1.8
    )
    stick = sp.Stick(340.0, np.array([2.5]), 0, 1, 30.0)
    block = sp.convolve_lineshape([stick], sweep)
    area = np.trapezoid(block[0], sweep.field_axis())
    assert math.isclose(area, 2.5, rel_tol=1e-4)


def test_convolution_outside_window_contributes_tail_only():
    sweep = sp.FieldSweepConfig(field_start_mt=300, field_stop_mt=380, n_points=801)
    inside = sp.convolve_lineshape([sp.Stick(340.0, np.array([1.0]), 0, 1, 30.0)], sweep)
    outside = sp.convolve_lineshape([sp.Stick(395.0, np.array([1.0]), 0, 1, 30.0)], sweep)
    a_in = np.trapezoid(inside[0], sweep.field_axis())
    a_out = np.trapezoid(outside[0], sweep.field_axis())
    assert math.isclose(a_in, 1.0, rel_tol=1e-4)
    assert 0 < a_out < 0.2


def test_opposite_sticks_cancel():
    sweep = sp.FieldSweepConfig(field_start_mt=300, field_stop_mt=380)
    sticks = [
        sp.Stick(340.0, np.array([1.0]), 0, 1, 30.0),
        sp.Stick(340.0, np.array([-1.0]), 0, 2, 30.0),
    ]
    assert np.abs(sp.convolve_lineshape(sticks, sweep)).max() < 1e-14


def test_halving_linewidth_doubles_peak():
    tall = sp.FieldSweepConfig(field_start_mt=300, field_stop_mt=380, n_points=4001, linewidth_mt=0.9)
    wide = sp.FieldSweepConfig(field_start_mt=300, field_stop_mt=380, n_points=4001, linewidth_mt=1.8)
    stick = [sp.Stick(340.0, np.array([1.0]), 0, 1, 30.0)]
    peak_tall = sp.convolve_lineshape(stick, tall).max()
    peak_wide = sp.convolve_lineshape(stick, wide).max()
    assert math.isclose(peak_tall / peak_wide, 2.0, rel_tol=1e-2)


def test_empty_stick_list():
    block = sp.convolve_lineshape([], FAST_SWEEP)
    assert block.shape == (1, FAST_SWEEP.n_points)
    assert np.abs(block).max() == 0


# ------------------------------------------------------------ full spectra


def test_simulation_linear_in_polarization():
    spec = sc.vanadyl_porphyrin_dimer()
    scheme = sp.SingleOrientationScheme(1.1, 0.6)
    base = sp.simulate_dimer(spec, TABLE_MODEL, FAST_SWEEP, scheme)
    doubled_params = pol.QuartetPolarizationParams(
        a=tuple(2 * v for v in TABLE_PARAMS.a), r=tuple(2 * v for v in TABLE_PARAMS.r)
    )
    doubled = sp.simulate_dimer(
        spec, pol.PhotoQuartetPolarization(doubled_params, TABLE_NUCLEAR), FAST_SWEEP, scheme
    )
    assert_allclose(doubled.intensity, 2 * base.intensity, atol=1e-12)


def test_basis_spectra_reproduce_direct_simulation():
    spec = sc.vanadyl_porphyrin_dimer()
    scheme = sp.SingleOrientationScheme(0.9, 1.7)
    basis = sp.quartet_basis_spectra(spec, FAST_SWEEP, scheme)
    assert basis.tensor.shape == (6, 8, FAST_SWEEP.n_points)
    combined = basis.evaluate(TABLE_PARAMS, TABLE_NUCLEAR)
    direct = sp.simulate_dimer(spec, TABLE_MODEL, FAST_SWEEP, scheme)
    scale = np.abs(direct.intensity).max()
    assert np.abs(combined - direct.intensity).max() < 1e-9 * scale


def test_simulation_covariant_under_global_rotation():
    spec = sc.vanadyl_porphyrin_dimer()
    rot = sc.rotation_matrix((0.7, 1.1, -0.4))
    n = np.array([0.3, -0.5, 0.81])
    n /= np.linalg.norm(n)
    o_lab = sc.LabOrientation.from_vector(n)
    o_rot = sc.LabOrientation.from_vector(rot @ n)
    a = sp.simulate_dimer(spec, TABLE_MODEL, FAST_SWEEP, sp.SingleOrientationScheme(o_lab.theta, o_lab.phi))
    b = sp.simulate_dimer(
        spec.rotated(rot), TABLE_MODEL, FAST_SWEEP, sp.SingleOrientationScheme(o_rot.theta, o_rot.phi)
    )
    scale = np.abs(a.intensity).max()
    assert np.abs(a.intensity - b.intensity).max() < 1e-8 * scale


def test_powder_spectrum_net_emissive():
    spec = sc.vanadyl_porphyrin_dimer()
    spectrum = sp.powder_average(spec, TABLE_MODEL, FAST_SWEEP, grid_size=16)
    assert spectrum.net_integral() < 0
    assert spectrum.metadata["scheme"]["kind"] == "powder"
    assert spectrum.metadata["diagnostics"]["sticks"] > 0


def test_aligned_extent_wider_perpendicular_than_parallel():
    spec = sc.vanadyl_porphyrin_dimer()
    par = sp.AlignedScheme("parallel", tilt_nodes=5, n_samples=8)
    perp = sp.AlignedScheme("perpendicular", tilt_nodes=5, transverse_nodes=6, n_samples=8)
    s_par = sp.simulate_dimer(spec, TABLE_MODEL, FAST_SWEEP, par)
    s_perp = sp.simulate_dimer(spec, TABLE_MODEL, FAST_SWEEP, perp)
    lo_par, hi_par = sp.intensity_extent(s_par)
    lo_perp, hi_perp = sp.intensity_extent(s_perp)
    assert hi_perp - lo_perp > hi_par - lo_par


def test_intensity_extent_basics():
    axis = np.linspace(0, 100, 1001)
    bump = np.exp(-0.5 * ((axis - 50) / 5) ** 2)
    lo, hi = sp.intensity_extent(sp.Spectrum(axis, bump))
    # 1% level of a Gaussian: center +- sigma * sqrt(2 ln 100)
    half = 5 * math.sqrt(2 * math.log(100))
    assert math.isclose(lo, 50 - half, abs_tol=0.2)
    assert math.isclose(hi, 50 + half, abs_tol=0.2)
    with pytest.raises(ValueError):
        sp.intensity_extent(sp.Spectrum(axis, np.zeros_like(axis)))


def test_net_integral_window():
    axis = np.linspace(0, 10, 101)
    spectrum = sp.Spectrum(axis, np.ones_like(axis))
    assert math.isclose(spectrum.net_integral(), 10.0, rel_tol=1e-12)
    assert math.isclose(spectrum.net_integral(2.0, 4.0), 2.0, rel_tol=1e-12)


# -------------------------------------------------------- reference systems


def test_triplet_powder_spectrum():
    sweep = sp.FieldSweepConfig(field_start_mt=280, field_stop_mt=400, n_points=1200, linewidth_mt=1.2)
    spectrum = sp.simulate_triplet(2.0023, 1153.0, 115.0, (0.0, 0.0, 1.0), sweep, grid_size=64)
    ge = 2.0023 * 13.9962449361
    b0 = 9500.0 / ge
    lo, hi = sp.intensity_extent(spectrum)
    # outermost features are the B || z pair split by 2D/(g muB)
    assert 2 * 1153.0 / ge < hi - lo < 2 * 1153.0 / ge + 20.0
    assert lo < b0 < hi
    low = spectrum.intensity[np.argmin(np.abs(spectrum.field_mt - (b0 - 1153.0 / ge)))]
    high = spectrum.intensity[np.argmin(np.abs(spectrum.field_mt - (b0 + 1153.0 / ge)))]
    assert low > 0 and high < 0  # m=0 overpopulated: absorptive low, emissive high


def test_cw_doublet_octet_width():
    sweep = sp.FieldSweepConfig(field_start_mt=240, field_stop_mt=440, n_points=1600, linewidth_mt=1.5)
    g = sc.InteractionTensor((1.985, 1.985, 1.964))
    a = sc.InteractionTensor((162.0, 162.0, 475.0))
    spectrum = sp.simulate_cw_doublet(g, a, sweep, grid_size=64)
    lo, hi = sp.intensity_extent(spectrum)
    z_width = 7 * 475.0 / (1.964 * 13.9962449361)
    assert z_width - 5.0 < hi - lo < z_width + 15.0
    # first-derivative signal integrates to ~0 over the full window
    scale = np.abs(spectrum.intensity).max() * (hi - lo)
    assert abs(spectrum.net_integral()) < 1e-3 * scale
    assert spectrum.metadata["derivative"] is True


def test_cw_doublet_isotropic_single_line():
    sweep = sp.FieldSweepConfig(field_start_mt=330, field_stop_mt=350, n_points=800, linewidth_mt=1.0)
    g = sc.InteractionTensor((2.0023, 2.0023, 2.0023))
    a = sc.InteractionTensor((0.0, 0.0, 0.0))
    spectrum = sp.simulate_cw_doublet(g, a, sweep, grid_size=32)
    crossings = np.nonzero(np.diff(np.sign(spectrum.intensity)))[0]
    center = oracles.isolated_doublet_field(9500.0, 2.0023)
    mid = spectrum.field_mt[crossings[np.argmin(np.abs(spectrum.field_mt[crossings] - center))]]
    assert math.isclose(mid, center, abs_tol=0.1)


# --------------------------------------------------------------- metadata


def test_metadata_round_trip_keys():
    sweep_meta = sp.sweep_metadata(FAST_SWEEP)
    assert sweep_meta["n_points"] == 512 and sweep_meta["lineshape"] == "lorentzian"
    scheme_meta = sp.scheme_metadata(sp.AlignedScheme("perpendicular", sigma_deg=8.0))
    assert scheme_meta["kind"] == "aligned" and scheme_meta["mode"] == "perpendicular"
    single = sp.scheme_metadata(sp.SingleOrientationScheme(0.5))
    assert single == {"kind": "single", "theta": 0.5, "phi": 0.0}
