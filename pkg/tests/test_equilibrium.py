import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpprovision.cost_model import (
    I_FLOOR, CostCurve, Empirical, LogNormal, NormalMixture, dc_lindahl, dc_vcg,
)
from dpprovision.equilibrium import (
    EQUILIBRIUM, ZERO_PROVISION, compare_regimes, private_foc_price, solve_competitive,
    solve_lindahl_supply, solve_marginal_cost_root, solve_pareto,
)
from dpprovision.errors import DomainError, NoBracketError, NonMonotoneWarning

CANON = CostCurve(LogNormal(0, 1), 1000, 1 / 3)


class TestRootFinder:
    def test_fixed_point_vcg(self):
        level = dc_vcg(CANON, 0.7)
        assert solve_marginal_cost_root(CANON, level).root == pytest.approx(0.7, abs=1e-9)

    def test_fixed_point_lindahl(self):
        curve = CANON.with_regime("lindahl")
        level = dc_lindahl(curve, 0.5)
        assert solve_marginal_cost_root(curve, level).root == pytest.approx(0.5, abs=1e-9)

    def test_tiny_level_has_no_root(self):
        # marginal cost at the bracket floor is the oracle for the expected outcome
        assert dc_vcg(CANON, I_FLOOR) > 1e-12
        with pytest.raises(NoBracketError) as info:
            solve_marginal_cost_root(CANON, 1e-12)
        assert info.value.side == "below"

    def test_huge_level_over_demand(self):
        with pytest.raises(NoBracketError) as info:
            solve_marginal_cost_root(CANON, 1e30)
        assert info.value.side == "above"

    def test_nonpositive_level(self):
        with pytest.raises(DomainError):
            solve_marginal_cost_root(CANON, 0.0)

    def test_root_is_certified_for_lognormal(self):
        res = solve_marginal_cost_root(CANON, dc_vcg(CANON, 0.6))
        assert res.status == EQUILIBRIUM and res.soc > 0
        assert abs(res.residual) <= 1e-8 * (1 + res.level)


class TestSolvers:
    def test_competitive_fixed_point(self):
        assert solve_competitive(CANON, dc_vcg(CANON, 0.6)) == pytest.approx(0.6, abs=1e-9)

    def test_lindahl_exceeds_competitive(self):
        eta_bar = dc_vcg(CANON, 0.6)
        assert solve_lindahl_supply(CANON, eta_bar) > solve_competitive(CANON, eta_bar)

    def test_lindahl_fixed_point(self):
        eta_bar = dc_lindahl(CANON.with_regime("lindahl"), 0.55)
        assert solve_lindahl_supply(CANON, eta_bar) == pytest.approx(0.55, abs=1e-9)

    def test_pareto_fixed_point(self):
        assert solve_pareto(CANON, dc_vcg(CANON, 0.9)) == pytest.approx(0.9, abs=1e-9)

    def test_pareto_exceeds_competitive(self):
        eta_bar = dc_vcg(CANON, 0.3)
        assert solve_pareto(CANON, 0.5 * 1000) > solve_competitive(CANON, eta_bar)

    def test_single_consumer_economy(self):
        eta = dc_vcg(CANON, 0.45)
        assert solve_pareto(CANON, eta) == pytest.approx(solve_competitive(CANON, eta), abs=1e-8)

    def test_below_floor_is_zero_provision(self):
        with pytest.raises(NoBracketError):
            solve_competitive(CANON, 0.5 * dc_vcg(CANON, I_FLOOR))

    def test_degenerate_model_rejected(self):
        curve = CostCurve(Empirical([2.0] * 10), 10, 0.1)
        with pytest.raises(DomainError):
            solve_lindahl_supply(curve, 1.0)

    @pytest.mark.parametrize("I", [0.1, 0.4, 0.8])
    def test_two_term_foc_matches_compact_form(self, I):
        assert private_foc_price(CANON, I) == pytest.approx(dc_vcg(CANON, I), rel=1e-12)


class TestCompareRegimes:
    def test_canonical(self):
        eta_bar = dc_vcg(CANON, 0.5)
        cmp = compare_regimes(LogNormal(0, 1), 1000, 1 / 3, eta_bar, 100 * eta_bar)
        assert cmp.i_vcg == pytest.approx(0.5, abs=1e-9)
        assert cmp.i_lindahl > 0.5 and cmp.i_pareto > 0.5
        assert cmp.eps_vcg < cmp.eps_pareto
        assert cmp.ordering_holds
        assert cmp.p_i == eta_bar
        assert cmp.foc_crosscheck < 1e-10

    def test_equal_sums(self):
        eta = dc_vcg(CANON, 0.5)
        cmp = compare_regimes(LogNormal(0, 1), 1000, 1 / 3, eta, eta)
        assert cmp.i_pareto == pytest.approx(cmp.i_vcg, abs=1e-8)
        assert cmp.ordering_holds

    def test_zero_provision_still_solves_pareto(self):
        floor = dc_vcg(CANON, I_FLOOR)
        cmp = compare_regimes(LogNormal(0, 1), 1000, 1 / 3, 0.5 * floor, dc_vcg(CANON, 0.7))
        assert cmp.tags["vcg"] == ZERO_PROVISION and cmp.i_vcg is None
        assert cmp.i_pareto == pytest.approx(0.7, abs=1e-9)
        assert cmp.ordering_holds is None
        assert cmp.to_dict()["ordering"] == {}

    def test_eta_sum_below_eta_bar(self):
        with pytest.raises(DomainError):
            compare_regimes(LogNormal(0, 1), 1000, 1 / 3, 2.0, 1.0)

    def test_mixture(self):
        model = NormalMixture([0.6, 0.4], [2.0, 5.0], [0.35, 0.8])
        curve = CostCurve(model, 500, 0.2)
        eta_bar = dc_vcg(curve, 0.4)
        # the density gap between the modes makes marginal cost non-monotone: it
        # crosses eta_bar three times, and the smallest crossing is the one kept
        with pytest.warns(NonMonotoneWarning):
            cmp = compare_regimes(model, 500, 0.2, eta_bar, 20 * eta_bar)
        assert cmp.roots["vcg"].crossings == 3
        assert cmp.i_vcg < 0.4
        assert dc_vcg(curve, cmp.i_vcg) == pytest.approx(eta_bar, rel=1e-8)
        assert all(dc_vcg(curve, x) < eta_bar for x in (0.02, 0.08, 0.9 * cmp.i_vcg))
        assert cmp.ordering_holds


@settings(max_examples=40, deadline=None)
@given(mu=st.floats(-1, 1), sigma=st.floats(0.2, 1.5), beta=st.floats(0.02, 0.37),
       target=st.floats(0.05, 0.9), ratio=st.floats(1.5, 200))
def test_ordering_property(mu, sigma, beta, target, ratio):
    model = LogNormal(mu, sigma)
    curve = CostCurve(model, 1000, beta)
    eta_bar = dc_vcg(curve, target)
    cmp = compare_regimes(model, 1000, beta, eta_bar, ratio * eta_bar)
    assert cmp.i_vcg == pytest.approx(target, abs=1e-8)
    if cmp.all_interior:
        assert cmp.ordering_holds, cmp.ordering_checks()
    else:
        missing = [k for k in ("lindahl", "pareto") if getattr(cmp, f"i_{k}") is None]
        assert missing and all(cmp.tags[k] not in (EQUILIBRIUM,) for k in missing)
