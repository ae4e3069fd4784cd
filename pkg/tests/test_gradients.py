import pytest

from grad_suite import CASES, N_CONFIGS, run_case

TOL = 1e-4


@pytest.mark.parametrize("seed", range(N_CONFIGS))
@pytest.mark.parametrize("name", sorted(CASES))
def test_analytic_gradient_matches_finite_differences(name, seed):
    assert run_case(name, seed) < TOL
