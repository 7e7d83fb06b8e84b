import numpy as np
import pytest
from numpy.testing import assert_allclose

from quartetsim import fitting as fit
from quartetsim import polarization as pol
from quartetsim import spectra as sp
from quartetsim import spincore as sc

TABLE_PARAMS = pol.QuartetPolarizationParams(a=(0.11, -0.002, -0.027), r=(0.0, -0.01, 0.0))
TABLE_NUCLEAR = pol.NuclearPopulations(
    (0.146, 0.078, 0.194, 0.126, 0.117, 0.165, 0.078, 0.097)
)
FAST = sp.FieldSweepConfig(n_points=512, search_points=301)

# three single-crystal orientations with distinct polarization-frame angles,
# enough to separate every coefficient channel cheaply
ORIENTATIONS = (
    sp.SingleOrientationScheme(1.0, 0.5),
    sp.SingleOrientationScheme(0.5, 2.0),
    sp.SingleOrientationScheme(1.3, 4.0),
)


@pytest.fixture(scope="module")
def system():
    return sc.vanadyl_porphyrin_dimer()


@pytest.fixture(scope="module")
def crystal_bases(system):
    return [sp.quartet_basis_spectra(system, FAST, s) for s in ORIENTATIONS]


def _datasets(bases, schemes, noise=0.0, seed=0):
    axis = FAST.field_axis()
    rng = np.random.default_rng(seed)
    out = []
    for k, (b, scheme) in enumerate(zip(bases, schemes)):
        signal = b.evaluate(TABLE_PARAMS, TABLE_NUCLEAR)
        if noise:
            signal = signal + noise * np.abs(signal).max() * rng.standard_normal(len(signal))
        out.append(fit.FitDataset(f"set{k}", sp.Spectrum(axis, signal), scheme))
    return tuple(out)


def _problem(system, datasets, free, start_params=None, start_nuclear=None, **settings):
    return fit.FitProblem(
        system=system,
        sweep=FAST,
        datasets=datasets,
        start_params=start_params or TABLE_PARAMS,
        start_nuclear=start_nuclear or TABLE_NUCLEAR,
        free=free,
        settings=fit.FitSettings(**settings) if settings else fit.FitSettings(),
    )


# -------------------------------------------------------------- validation


def test_problem_validation(system, crystal_bases):
    datasets = _datasets(crystal_bases[:1], ORIENTATIONS[:1])
    with pytest.raises(ValueError):
        _problem(system, (), ("a2",))
    with pytest.raises(ValueError):
        _problem(system, datasets, ())
    with pytest.raises(ValueError):
        _problem(system, datasets, ("a2", "bogus"))
    problem = _problem(system, datasets, ("a1", "rho_n", "a3"))
    assert problem.free_coefficients == ("a1", "a3")
    assert problem.fits_nuclear


def test_dataset_validation():
    axis = np.linspace(300, 400, 64)
    good = sp.Spectrum(axis, np.zeros(64))
    with pytest.raises(ValueError):
        fit.FitDataset("w", good, sp.PowderScheme(16), weight=0.0)
    with pytest.raises(ValueError):
        fit.FitDataset("b", sp.Spectrum(axis[::-1].copy(), np.zeros(64)), sp.PowderScheme(16))
    with pytest.raises(ValueError):
        fit.FitDataset("n", sp.Spectrum(axis, np.zeros(32)), sp.PowderScheme(16))


def test_dataset_bases_cached_per_scheme(system, crystal_bases):
    scheme = ORIENTATIONS[0]
    datasets = _datasets([crystal_bases[0], crystal_bases[0]], [scheme, scheme])
    problem = _problem(system, datasets, ("a2",))
    bases = fit.dataset_bases(problem)
    assert bases[0] is bases[1]


# ---------------------------------------------------------------- residual


def test_residual_self_consistency(system, crystal_bases):
    datasets = _datasets(crystal_bases, ORIENTATIONS)
    problem = _problem(system, datasets, ("a1",))
    r = fit.residual(problem, TABLE_PARAMS, TABLE_NUCLEAR)
    assert np.linalg.norm(r) < 1e-10


def test_residual_zero_data_zero_polarization(system, crystal_bases):
    axis = FAST.field_axis()
    datasets = tuple(
        fit.FitDataset(f"z{k}", sp.Spectrum(axis, np.zeros_like(axis)), s)
        for k, s in enumerate(ORIENTATIONS[:2])
    )
    problem = _problem(system, datasets, ("a1",))
    zero = pol.QuartetPolarizationParams(a=(0, 0, 0), r=(0, 0, 0))
    r = fit.residual(problem, zero, pol.NuclearPopulations.uniform())
    assert np.abs(r).max() == 0.0


def test_residual_grows_under_perturbation(system, crystal_bases):
    datasets = _datasets(crystal_bases, ORIENTATIONS)
    problem = _problem(system, datasets, ("a1",))
    base = np.linalg.norm(fit.residual(problem, TABLE_PARAMS, TABLE_NUCLEAR))
    bumped = pol.QuartetPolarizationParams(
        a=(TABLE_PARAMS.a[0] * 1.1, *TABLE_PARAMS.a[1:]), r=TABLE_PARAMS.r
    )
    worse = np.linalg.norm(fit.residual(problem, bumped, TABLE_NUCLEAR))
    assert worse > base + 1e-6


def test_residual_invariant_under_common_intensity_scale(system, crystal_bases):
    datasets = _datasets(crystal_bases, ORIENTATIONS, noise=0.02, seed=7)
    scaled = tuple(
        fit.FitDataset(ds.name, sp.Spectrum(ds.spectrum.field_mt, 7.0 * ds.spectrum.intensity), ds.scheme)
        for ds in datasets
    )
    p_a = _problem(system, datasets, ("a1",))
    p_b = _problem(system, scaled, ("a1",))
    r_a = fit.residual(p_a, TABLE_PARAMS, TABLE_NUCLEAR)
    r_b = fit.residual(p_b, TABLE_PARAMS, TABLE_NUCLEAR)
    assert_allclose(r_a, r_b, atol=1e-12)


def test_evaluate_model_matches_closed_form_scale(system, crystal_bases):
    datasets = _datasets(crystal_bases[:1], ORIENTATIONS[:1], noise=0.05, seed=3)
    problem = _problem(system, datasets, ("a1",))
    (model,) = fit.evaluate_model(problem, TABLE_PARAMS, TABLE_NUCLEAR)
    exp = datasets[0].spectrum.intensity
    # optimal scale leaves the residual orthogonal to the model
    assert abs(float(model @ (model - exp))) < 1e-8 * float(model @ model)


# -------------------------------------------------------------------- fits


@pytest.mark.parametrize("a2_start", [-0.9, 0.0, 0.9])
def test_single_free_coefficient_recovery(system, crystal_bases, a2_start):
    datasets = _datasets(crystal_bases[:1], ORIENTATIONS[:1])
    start = pol.QuartetPolarizationParams(a=(0.11, a2_start, -0.027), r=TABLE_PARAMS.r)
    problem = _problem(system, datasets, ("a2",), start_params=start, n_starts=1)
    result = fit.fit_simultaneous(problem)
    assert abs(result.params.a[1] - (-0.002)) <= 0.01 * 0.002
    assert result.params.a[0] == 0.11  # fixed parameters untouched
    assert result.residual_norm < 1e-6


def test_joint_recovery_exact_data(system, crystal_bases):
    datasets = _datasets(crystal_bases, ORIENTATIONS)
    start = pol.QuartetPolarizationParams(a=(0.2, -0.05, -0.1), r=(0.0, -0.05, 0.0))
    problem = _problem(
        system, datasets, ("a1", "a2", "a3", "r2", "rho_n"),
        start_params=start, start_nuclear=pol.NuclearPopulations.uniform(),
        n_starts=2, max_iterations=8000,
    )
    result = fit.fit_simultaneous(problem)
    truth = np.array([*TABLE_PARAMS.a, TABLE_PARAMS.r[1]])
    got = np.array([*result.params.a, result.params.r[1]])
    assert (np.abs(got - truth) <= 0.05 * np.abs(truth)).all()
    p = result.nuclear.as_array()
    assert np.abs(p - TABLE_NUCLEAR.as_array()).max() < 0.01
    assert abs(p.sum() - 1.0) < 1e-9 and (p >= 0).all()
    assert result.converged


def test_three_geometry_noisy_round_trip(system):
    # aligned parallel / aligned perpendicular / powder, 1% noise
    schemes = (
        sp.AlignedScheme("parallel", tilt_nodes=5, n_samples=8),
        sp.AlignedScheme("perpendicular", tilt_nodes=5, transverse_nodes=6, n_samples=8),
        sp.PowderScheme(24),
    )
    bases = [sp.quartet_basis_spectra(system, FAST, s) for s in schemes]
    datasets = _datasets(bases, schemes, noise=0.01, seed=4117)
    start = pol.QuartetPolarizationParams(a=(0.2, -0.05, -0.1), r=(0.0, -0.05, 0.0))
    problem = _problem(
        system, datasets, ("a1", "a2", "a3", "r2", "rho_n"),
        start_params=start, start_nuclear=pol.NuclearPopulations.uniform(),
        n_starts=2, max_iterations=8000,
    )
    result = fit.fit_simultaneous(problem)
    truth = np.array([*TABLE_PARAMS.a, TABLE_PARAMS.r[1]])
    got = np.array([*result.params.a, result.params.r[1]])
    assert (np.abs(got - truth) <= 0.15 * np.abs(truth)).all()
    assert np.abs(result.nuclear.as_array() - TABLE_NUCLEAR.as_array()).max() < 0.02
    # data were generated at unit scale, so fitted scales sit near one
    assert all(0.9 < s < 1.1 for s in result.scales)


def test_fit_deterministic(system, crystal_bases):
    datasets = _datasets(crystal_bases[:1], ORIENTATIONS[:1], noise=0.01, seed=11)
    start = pol.QuartetPolarizationParams(a=(0.11, 0.3, -0.027), r=TABLE_PARAMS.r)
    problem = _problem(system, datasets, ("a2",), start_params=start, n_starts=2)
    r1 = fit.fit_simultaneous(problem)
    r2 = fit.fit_simultaneous(problem)
    assert r1.cost == r2.cost
    assert r1.params == r2.params
    assert r1.scales == r2.scales
    assert r1.start_costs == r2.start_costs


def test_fit_report_fields(system, crystal_bases):
    datasets = _datasets(crystal_bases[:1], ORIENTATIONS[:1])
    problem = _problem(system, datasets, ("a2",), n_starts=1)
    result = fit.fit_simultaneous(problem)
    report = fit.fit_report(problem, result)
    for token in ("a2:", "rho_n:", "scale[set0]:", "converged:", "seed:"):
        assert token in report
