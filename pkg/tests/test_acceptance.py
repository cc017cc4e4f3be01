"""Exit-criteria battery: one PASS/FAIL line per criterion, tolerances pinned here."""

import pytest

from sphere_fheat import acceptance as acc

pytestmark = pytest.mark.acceptance

# criterion -> (keyword tolerances, runtime budget in seconds)
PINNED = {
    1: ({"rel_tol": 1e-6}, 60),
    2: ({"rel_tol": 1e-4, "cases": 20, "n": 2000}, 300),
    3: ({"z_max": 3.0, "band": 0.99, "replicates": 100_000}, 120),
    4: ({"tol_analytic": 0.1, "tol_mc": 0.15}, 300),
    5: ({"tol": 0.1}, 300),
    6: ({"tol": 0.1}, 600),
    7: ({"tol": 0.1, "L": 2048}, 600),
    8: ({"tol": 0.15}, 600),
    9: ({"tolerance": 1e-6}, 120),
    10: ({"stabilization": 0.5, "control_factor": 2.0, "replicates": 64}, 900),
    11: ({"addition_tol": 1e-10, "conj_tol": 1e-12, "imag_tol": 1e-8, "iso_tol": 1e-10, "z_max": 3.0}, 120),
}


def _run(cid, acceptance_log):
    kwargs, budget = PINNED[cid]
    res = getattr(acc, f"criterion_{cid}")(**kwargs)
    acceptance_log.append(res.line())
    print(res.line())
    assert res.passed, res.summary
    assert res.seconds < budget, f"runtime {res.seconds:.1f} s over the {budget} s budget"


def test_criterion_01_quadrature_cross_engine(acceptance_log):
    _run(1, acceptance_log)


def test_criterion_02_brute_force_oracle(acceptance_log):
    _run(2, acceptance_log)


def test_criterion_03_sampler_exactness(acceptance_log):
    _run(3, acceptance_log)


def test_criterion_04_spectrum_law(acceptance_log):
    _run(4, acceptance_log)


def test_criterion_05_truncation_law(acceptance_log):
    _run(5, acceptance_log)


def test_criterion_06_temporal_variogram(acceptance_log):
    _run(6, acceptance_log)


def test_criterion_07_spatial_variogram(acceptance_log):
    _run(7, acceptance_log)


def test_criterion_08_slnd_scaling(acceptance_log):
    _run(8, acceptance_log)


def test_criterion_09_smoothness_thresholds(acceptance_log):
    _run(9, acceptance_log)


def test_criterion_10_modulus_statistics(acceptance_log):
    _run(10, acceptance_log)


def test_criterion_11_structural_suite(acceptance_log):
    _run(11, acceptance_log)
