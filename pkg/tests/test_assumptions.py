import math

import numpy as np
import pytest

import oracles as orc
import qsdlab
from qsdlab import (AssumptionCertificate, Exhaustion, SingularSystemError,
                    SubMarkovGenerator, check_dc, check_et, check_mix,
                    check_sv, derive_coupling_constants, eta_sup_bound,
                    lj_certificate, max_escape_rate, mix_extension,
                    point_mass, replay_certificate, solve_eigentriple,
                    sv_from_regeneration, verify_mass_retention)
from qsdlab.coupling import CouplingConstants


def exhaustion_coupling_on(sets, survival=0, coupling=0, mixing=None):
    return Exhaustion(sets=tuple(np.asarray(s, dtype=np.int64) for s in sets),
                      survival=survival, coupling=coupling, mixing=mixing)


class TestExhaustion:
    def test_indices_validated(self):
        with pytest.raises(ValueError):
            exhaustion_coupling_on([[0], [0, 1]], survival=1, coupling=0)
        with pytest.raises(ValueError):
            exhaustion_coupling_on([[0], [0, 1]], survival=0, coupling=2)

    def test_windows_must_nest(self):
        with pytest.raises(ValueError):
            exhaustion_coupling_on([[1], [0]], survival=0, coupling=1)

    def test_masks_and_positions(self):
        exh = exhaustion_coupling_on([[1], [0, 1, 2]], survival=0, coupling=1)
        np.testing.assert_array_equal(exh.mask(0, 3), [False, True, False])
        np.testing.assert_array_equal(exh.positions_in(0, 1), [1])

    def test_json_round_trip(self):
        exh = exhaustion_coupling_on([[0], [0, 1]], survival=0, coupling=1,
                                     mixing=1)
        back = Exhaustion.from_json_dict(exh.to_json_dict())
        assert back.survival == 0 and back.coupling == 1 and back.mixing == 1
        np.testing.assert_array_equal(back.set(1), [0, 1])


class TestMix:
    def test_golden_auto_matches_entrywise_row_minimum(self, golden,
                                                       golden_exh):
        cert = check_mix(golden, golden_exh, 1, 1.0)
        rows = orc.dense_expm(orc.GOLDEN_Q, 1.0)
        v = rows.min(axis=0)
        assert cert.holds
        assert cert.constants["c"] == pytest.approx(v.sum(), abs=1e-12)
        np.testing.assert_allclose(cert.witness["alpha_c"], v / v.sum(),
                                   atol=1e-12)

    def test_rows_dominate_scaled_reference(self, golden, golden_exh):
        cert = check_mix(golden, golden_exh, 1, 1.0)
        rows = orc.dense_expm(orc.GOLDEN_Q, 1.0)
        floor = cert.constants["c"] * np.asarray(cert.witness["alpha_c"])
        assert (rows - floor[None, :] >= -1e-12).all()

    def test_disconnected_components_fail(self):
        gen = SubMarkovGenerator(np.zeros((2, 2)), [1.0, 2.0])
        exh = exhaustion_coupling_on([[0, 1]], survival=0, coupling=0,
                                     mixing=0)
        cert = check_mix(gen, exh, 0, 1.0)
        assert not cert.holds
        assert cert.constants["c"] == 0.0

    def test_supplied_reference_law(self, golden, golden_exh):
        cert = check_mix(golden, golden_exh, 1, 1.0,
                         alpha_c=orc.GOLDEN_ALPHA)
        rows = orc.dense_expm(orc.GOLDEN_Q, 1.0)
        exact = (rows / orc.GOLDEN_ALPHA[None, :]).min()
        assert cert.constants["c"] == pytest.approx(exact, rel=1e-12)

    def test_extension_chains_certified_weight(self, golden, golden_exh):
        cert = check_mix(golden, golden_exh, 1, 1.0)
        c, alpha = cert.constants["c"], np.asarray(cert.witness["alpha_c"])
        assert mix_extension(cert, golden_exh, 1) == pytest.approx(c)
        expected = c * (c * alpha.sum()) ** 2
        assert mix_extension(cert, golden_exh, 3) == pytest.approx(expected)
        # chaining is a genuine lower bound for the direct check at k*t
        direct = check_mix(golden, golden_exh, 1, 3.0)
        assert direct.constants["c"] >= mix_extension(cert, golden_exh, 3)


class TestDc:
    def test_stationary_reference_gives_capacity_ceiling(self, golden,
                                                         golden_exh):
        cert = check_dc(golden, golden_exh, orc.GOLDEN_ALPHA, t_floor=1.0)
        assert cert.holds
        # P_x(t<death)/P_alpha(t<death) -> eta(x); ceiling is max eta * pad
        assert cert.constants["asymptotic"] == \
            pytest.approx(orc.GOLDEN_ETA.max(), rel=1e-9)
        assert cert.constants["c"] == \
            pytest.approx(1.05 * orc.GOLDEN_ETA.max(), rel=1e-6)

    def test_point_reference_ratio_tends_to_eta_ratio(self, golden,
                                                      golden_exh):
        cert = check_dc(golden, golden_exh, point_mass(0, 2).w, t_floor=1.0)
        assert cert.constants["asymptotic"] == \
            pytest.approx(orc.GOLDEN_ETA[1] / orc.GOLDEN_ETA[0], rel=1e-9)
        assert cert.constants["asymptotic"] == pytest.approx(orc.PHI, rel=1e-9)

    def test_grid_ratios_match_dense_survival(self, golden, golden_exh):
        grid = np.array([1.0, 2.0, 4.0])
        cert = check_dc(golden, golden_exh, orc.GOLDEN_ALPHA, t_floor=1.0,
                        t_grid=grid)
        for i, t in enumerate(grid):
            surv = orc.dense_expm(orc.GOLDEN_Q, t).sum(axis=1)
            exact = surv.max() / float(orc.GOLDEN_ALPHA @ surv)
            assert cert.witness["grid_ratios"][i] == pytest.approx(exact,
                                                                   rel=1e-10)


@pytest.fixture(scope="module")
def tail_exh():
    """Coupling window {1}: state 0 is the transitory block."""
    return exhaustion_coupling_on([[1], [0, 1]], survival=0, coupling=0,
                                  mixing=1)


class TestEt:
    def test_single_transitory_state_matches_exponential_mgf(self, golden,
                                                             tail_exh):
        # state 0 leaves (to state 1 or to death) at total rate 2
        for rho in (0.3, 0.7, 1.5):
            cert = check_et(golden, tail_exh, rho)
            assert cert.holds
            assert cert.constants["e_T"] == \
                pytest.approx(orc.exp_mgf(2.0, rho), rel=1e-12)

    def test_rate_beyond_exit_rate_fails(self, golden, tail_exh):
        cert = check_et(golden, tail_exh, 2.5)
        assert not cert.holds
        assert cert.constants["e_T"] == math.inf

    def test_rate_at_singularity_raises(self, golden, tail_exh):
        with pytest.raises(SingularSystemError):
            check_et(golden, tail_exh, 2.0)

    def test_full_coverage_gives_unit_moment(self, golden, golden_exh):
        cert = check_et(golden, golden_exh, 5.0)
        assert cert.holds
        assert cert.constants["e_T"] == 1.0

    def test_max_escape_rate_bisects_to_the_exit_rate(self, golden, tail_exh):
        rate = max_escape_rate(golden, tail_exh)
        assert 1.8 < rate < 2.0
        assert check_et(golden, tail_exh, rate).holds

    def test_nonpositive_rate_rejected(self, golden, golden_exh):
        with pytest.raises(ValueError):
            check_et(golden, golden_exh, 0.0)


class TestSv:
    def test_single_state_core_equals_total_exit_rate(self, golden):
        exh = exhaustion_coupling_on([[0], [0, 1]], survival=0, coupling=1,
                                     mixing=0)
        cert = check_sv(golden, exh, safety=1.0)
        assert cert.holds
        assert cert.constants["rho_sv"] == pytest.approx(2.0, abs=1e-10)
        assert cert.constants["c_sv"] == pytest.approx(1.0, abs=1e-9)

    def test_rate_is_killed_window_decay_rate(self, ladder20, ladder20_exh):
        cert = check_sv(ladder20, ladder20_exh)
        sub, _ = ladder20.restricted(ladder20_exh.set(ladder20_exh.mixing))
        lam0, _, _, _ = orc.dense_eigen(sub.dense_q())
        assert cert.constants["rho_sv"] == pytest.approx(lam0, abs=1e-9)
        # window decay can only be faster than the full chain's
        full_lam0, _, _, _ = orc.dense_eigen(ladder20.dense_q())
        assert cert.constants["rho_sv"] >= full_lam0 - 1e-12

    def test_floor_certifies_actual_survival(self, golden):
        exh = exhaustion_coupling_on([[0], [0, 1]], survival=0, coupling=1,
                                     mixing=1)
        cert = check_sv(golden, exh)
        rho, c_sv = cert.constants["rho_sv"], cert.constants["c_sv"]
        for t in (0.5, 1.5, 4.0):
            surv = orc.dense_expm(orc.GOLDEN_Q, t).sum(axis=1)
            assert surv[0] >= c_sv * math.exp(-rho * t) - 1e-12

    def test_regeneration_route(self, golden, golden_exh):
        mix = check_mix(golden, golden_exh, 1, 1.0)
        cert = sv_from_regeneration(mix, golden_exh)
        c_rg = mix.constants["c"] * float(
            np.asarray(mix.witness["alpha_c"])[golden_exh.set(0)].sum())
        assert cert.constants["c_sv"] == pytest.approx(c_rg, rel=1e-12)
        assert cert.constants["rho_sv"] == \
            pytest.approx(-math.log(c_rg) / 1.0, rel=1e-12)


class TestRetention:
    def test_golden_report_picks_a_majority_window(self, golden, golden_exh):
        grid = qsdlab.default_t_grid(0.25, 8.0, points_per_decade=16)
        mus = [point_mass(i, 2).w for i in range(2)]
        rep = verify_mass_retention(golden, golden_exh, mus, grid)
        assert rep.holds
        chosen = rep.chosen
        assert chosen["xi"] >= 0.5
        # the full window always retains everything
        full_row = rep.xi_table[-1]
        assert full_row["xi"] == pytest.approx(1.0, abs=1e-12)

    def test_window_fractions_match_dense_semigroup(self, golden, golden_exh):
        grid = np.array([0.5, 1.0, 2.0])
        mus = [point_mass(0, 2).w]
        rep = verify_mass_retention(golden, golden_exh, mus, grid)
        # window {0}: conditioned mass on state 0, minimized over the tail
        fractions = [orc.dense_dcne(orc.GOLDEN_Q, mus[0], t)[0] for t in grid]
        expected_tail_min = min(fractions)
        row0 = rep.xi_table[0]
        assert row0["xi"] <= expected_tail_min + 1e-12


class TestDerivedConstants:
    def test_zeta_formula_direct_evaluation(self):
        consts = CouplingConstants(t_db=1.0, c_db=0.5, t_ps=1.0, c_ps=2.0,
                                   t_xt=0.0, n_rn=0, xi_rn=0.5,
                                   alpha_c=np.array([1.0]))
        assert consts.c_bar == pytest.approx(0.25)
        assert consts.zeta == pytest.approx(-math.log(1.0 - 0.25))
        assert consts.zeta == pytest.approx(0.2876821, abs=1e-7)

    def test_bound_constant_formula(self):
        consts = CouplingConstants(t_db=2.0, c_db=0.5, t_ps=3.0, c_ps=2.0,
                                   t_xt=1.0, n_rn=0, xi_rn=0.5,
                                   alpha_c=np.array([1.0]))
        expected = 2.0 * math.exp(consts.zeta * (3.0 + 2.0 + 1.0))
        assert consts.bound_constant == pytest.approx(expected, rel=1e-12)

    def test_golden_constants_positive_and_below_gap(self, golden_constants):
        consts = golden_constants
        assert consts.c_db > 0 and consts.c_ps >= 1.0
        assert 0.0 < consts.c_bar < 1.0
        assert 0.0 < consts.zeta <= orc.GOLDEN_GAP + 1e-9
        assert consts.t_ps > 0 and consts.t_db > 0

    def test_rate_ordering_enforced(self, golden, golden_exh):
        certs = {"mix": check_mix(golden, golden_exh, 1, 1.0)}
        alpha_c = np.asarray(certs["mix"].witness["alpha_c"])
        certs["dc"] = check_dc(golden, golden_exh, alpha_c, t_floor=1.0)
        certs["et"] = check_et(golden, golden_exh, 0.05)
        certs["sv"] = check_sv(golden, golden_exh)
        certs["lj"] = lj_certificate(golden)
        # escape rate 0.05 sits below the survival rate lambda0 ~ 0.382
        with pytest.raises(ValueError):
            derive_coupling_constants(golden, golden_exh, certs)

    def test_json_round_trip(self, golden_constants):
        back = CouplingConstants.from_json_dict(
            golden_constants.to_json_dict())
        assert back.t_db == golden_constants.t_db
        assert back.c_db == golden_constants.c_db
        np.testing.assert_allclose(back.alpha_c, golden_constants.alpha_c)

    def test_eta_ceiling_certifies_the_eigenvector(self, golden, golden_exh,
                                                   golden_eigen,
                                                   golden_constants):
        mix = check_mix(golden, golden_exh, 1, 1.0)
        rep = eta_sup_bound(golden, golden_eigen, mix, golden_exh,
                            golden_constants)
        assert rep["holds"]
        assert rep["eta_max"] == pytest.approx(orc.GOLDEN_ETA.max(), rel=1e-9)
        assert rep["bound"] >= rep["eta_max"]


class TestReplay:
    def test_certificates_replay_bitwise(self, golden, golden_exh):
        mix = check_mix(golden, golden_exh, 1, 1.0)
        alpha_c = np.asarray(mix.witness["alpha_c"])
        certs = [mix,
                 check_dc(golden, golden_exh, alpha_c, t_floor=1.0),
                 check_et(golden, golden_exh, 1.0),
                 check_sv(golden, golden_exh),
                 lj_certificate(golden)]
        for cert in certs:
            ok, fresh = replay_certificate(golden, golden_exh, cert)
            assert ok, f"{cert.name} failed to replay"
            assert fresh.holds == cert.holds

    def test_tampered_constants_detected(self, golden, golden_exh):
        cert = check_mix(golden, golden_exh, 1, 1.0)
        doctored = AssumptionCertificate(
            name=cert.name, holds=cert.holds,
            constants={**cert.constants, "c": cert.constants["c"] * 1.01},
            params=cert.params, witness=cert.witness)
        ok, _ = replay_certificate(golden, golden_exh, doctored)
        assert not ok

    def test_regeneration_route_refuses_replay(self, golden, golden_exh):
        mix = check_mix(golden, golden_exh, 1, 1.0)
        cert = sv_from_regeneration(mix, golden_exh)
        with pytest.raises(ValueError):
            replay_certificate(golden, golden_exh, cert)

    def test_serialized_certificate_round_trips(self, golden, golden_exh):
        cert = check_et(golden, golden_exh, 1.0)
        back = AssumptionCertificate.from_json_dict(cert.to_json_dict())
        assert back.name == "et" and back.holds
        assert back.constants["e_T"] == cert.constants["e_T"]
