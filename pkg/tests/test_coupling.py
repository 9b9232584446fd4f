"""Coupling engine: floor extraction, bookkeeping identities, domination.

The two-state golden-ratio chain gives closed-form survival ratios, so the
per-step weights and residuals have exact expected values; everything else is
cross-checked against the dense matrix-exponential oracle or against a second
independent code path inside the package (fresh semigroup flows vs the run's
precomputed lattice panels).
"""

import math

import numpy as np
import pytest

import oracles as orc
import qsdlab
from qsdlab import (CouplingConstants, CouplingRun, DominationViolatedError,
                    HorizonTooShortError, conditioned_time_marginal,
                    coupling_mass, dcne, glb_minorant, horizon_steps,
                    minorizing_measure, point_mass, tv_distance,
                    verify_glb, verify_lower_bound)
from qsdlab.coupling import residual_identity
from qsdlab.errors import InductionBrokenError

IDENT = 1e-10
SLACK = 1e-12


def stationary_constants(alpha, c_db=0.5, c_ps=2.0, t_db=1.0, t_ps=1.0):
    """Constants whose reference law is the quasi-stationary law itself.

    With alpha as both the start law and the floor reference, every survival
    ratio in the extraction collapses to a power of e^{-lambda0 t} and
    cancels, so the run has exact closed-form weights.
    """
    return CouplingConstants(t_db=t_db, c_db=c_db, t_ps=t_ps, c_ps=c_ps,
                             t_xt=0.0, n_rn=1, xi_rn=0.5, alpha_c=alpha)


class TestConstants:
    def test_derived_quantities(self):
        c = stationary_constants(np.array([0.5, 0.5]))
        assert c.c_bar == pytest.approx(0.25, abs=1e-15)
        assert c.zeta == pytest.approx(-math.log(0.75), rel=1e-14)
        assert c.bound_constant == pytest.approx(
            2.0 * math.exp(c.zeta * (c.t_ps + c.t_db + c.t_xt)), rel=1e-14)

    def test_coupled_fraction_must_be_a_fraction(self):
        a = np.array([0.5, 0.5])
        with pytest.raises(ValueError):
            stationary_constants(a, c_db=2.0, c_ps=1.0)   # c_bar > 1
        with pytest.raises(ValueError):
            stationary_constants(a, c_db=0.0, c_ps=1.0)   # c_bar = 0
        with pytest.raises(ValueError):
            stationary_constants(a, c_db=-0.5, c_ps=1.0)

    def test_times_validated(self):
        a = np.array([0.5, 0.5])
        with pytest.raises(ValueError):
            stationary_constants(a, t_db=0.0)
        with pytest.raises(ValueError):
            stationary_constants(a, t_ps=-1.0)

    def test_reference_law_validated(self):
        with pytest.raises(ValueError):
            stationary_constants(np.array([0.7, 0.7]))
        with pytest.raises(ValueError):
            stationary_constants(np.array([1.3, -0.3]))

    def test_json_round_trip(self, golden_constants):
        d = golden_constants.to_json_dict()
        back = CouplingConstants.from_json_dict(d)
        assert back.t_db == golden_constants.t_db
        assert back.c_db == golden_constants.c_db
        assert back.c_ps == golden_constants.c_ps
        assert back.t_ps == golden_constants.t_ps
        assert back.t_xt == golden_constants.t_xt
        assert (back.n_rn, back.xi_rn) == (golden_constants.n_rn,
                                           golden_constants.xi_rn)
        np.testing.assert_allclose(back.alpha_c, golden_constants.alpha_c,
                                   rtol=0, atol=0)


class TestHorizonSteps:
    def test_direct_evaluation(self):
        c = stationary_constants(np.array([0.5, 0.5]), t_db=2.0, t_ps=1.0)
        assert horizon_steps(c, 10.0) == 4

    def test_one_step_exactly(self):
        c = stationary_constants(np.array([0.5, 0.5]))
        assert horizon_steps(c, c.t_ps + c.t_db) == 1

    def test_half_step_rounds_down(self):
        c = stationary_constants(np.array([0.5, 0.5]))
        assert horizon_steps(c, c.t_ps + 0.5 * c.t_db) == 0

    def test_below_onset_raises(self):
        c = stationary_constants(np.array([0.5, 0.5]))
        with pytest.raises(HorizonTooShortError):
            horizon_steps(c, 0.5 * c.t_ps)


class TestCouplingMass:
    def test_indicator_gates(self, golden, golden_constants):
        consts = golden_constants
        mu = point_mass(1, 2).w
        t_h = consts.t_ps + 4.0 * consts.t_db
        J = horizon_steps(consts, t_h)
        assert coupling_mass(golden, consts, mu, J + 1, t_h, t_h) == 0.0
        assert coupling_mass(golden, consts, mu, 0, t_h, t_h) == 0.0
        # a piece cannot exist before its own extraction time
        assert coupling_mass(golden, consts, mu, 2, 1.5 * consts.t_db,
                             t_h) == 0.0

    def test_first_piece_at_horizon_is_the_coupled_fraction(self, golden,
                                                            golden_constants):
        consts = golden_constants
        mu = point_mass(1, 2).w
        t_h = consts.t_ps + 4.0 * consts.t_db
        got = coupling_mass(golden, consts, mu, 1, t_h, t_h)
        assert got == pytest.approx(consts.c_bar, rel=1e-12)

    def test_matches_run_lattice_weights(self, golden, golden_constants):
        """Fresh survival-series route equals the run's panel route."""
        consts = golden_constants
        mu = point_mass(1, 2).w
        t_h = consts.t_ps + 4.0 * consts.t_db
        run = CouplingRun(golden, consts, mu, t_h)
        for j in range(1, run.J + 1):
            for k in range(1, j + 1):
                fresh = coupling_mass(golden, consts, mu, k,
                                      j * consts.t_db, t_h)
                assert fresh == pytest.approx(run.floor_weight(k, j),
                                              rel=1e-11, abs=1e-13)

    def test_stationary_start_gives_geometric_weights(self, golden,
                                                      golden_eigen):
        alpha = golden_eigen.alpha.w
        consts = stationary_constants(alpha)
        t_h = consts.t_ps + 4.0 * consts.t_db
        for k in (1, 2, 3):
            expected = consts.c_bar * (1.0 - consts.c_bar) ** (k - 1)
            got = coupling_mass(golden, consts, alpha, k,
                                3.0 * consts.t_db, t_h)
            assert got == pytest.approx(expected, rel=1e-12)


class TestStationaryCollapse:
    """Start law = reference law = quasi-stationary law: everything is exact."""

    @pytest.fixture()
    def collapse_run(self, golden, golden_eigen):
        alpha = golden_eigen.alpha.w
        consts = stationary_constants(alpha)
        run = CouplingRun(golden, consts, alpha, t_h=5.0)
        run.run()
        return consts, run

    def test_step_weight_is_constant(self, collapse_run):
        consts, run = collapse_run
        assert run.J == 4
        for row in run.trace:
            assert row["c"] == pytest.approx(consts.c_bar, rel=1e-12)

    def test_residual_is_a_pure_power(self, collapse_run):
        consts, run = collapse_run
        for row in run.trace:
            expected = (1.0 - consts.c_bar) ** row["j"]
            assert row["r"] == pytest.approx(expected, rel=1e-12)

    def test_residual_law_stays_stationary(self, collapse_run, golden_eigen):
        _, run = collapse_run
        np.testing.assert_allclose(run.state["nu"], golden_eigen.alpha.w,
                                   rtol=0, atol=1e-12)

    def test_floor_mixture_is_a_scalar_multiple(self, golden, golden_eigen):
        alpha = golden_eigen.alpha.w
        consts = stationary_constants(alpha)
        mm = minorizing_measure(golden, consts, 5.0)
        mass = 1.0 - 0.75 ** 4
        assert mm.w.sum() == pytest.approx(mass, abs=1e-13)
        assert mass == pytest.approx(0.68359375, abs=0)
        np.testing.assert_allclose(mm.w, mass * alpha, rtol=0, atol=1e-13)


class TestRunGolden:
    @pytest.fixture()
    def accepted(self, golden, golden_constants):
        t_h = golden_constants.t_ps + 4.0 * golden_constants.t_db
        run = CouplingRun(golden, golden_constants, point_mass(1, 2).w, t_h)
        run.run()
        return run

    def test_initial_state_convention(self, golden, golden_constants):
        mu = np.array([0.25, 0.75])
        run = CouplingRun(golden, golden_constants, mu,
                          golden_constants.t_ps + 2.0)
        assert run.state["j"] == 0
        assert run.state["r"] == 1.0
        np.testing.assert_allclose(run.state["nu"], mu, rtol=0, atol=0)
        # residual closed form is an exact identity before any extraction
        assert run.state["ser_deviation"] == 0.0

    def test_all_steps_accepted(self, accepted, golden_constants):
        run = accepted
        assert len(run.trace) == run.J == 4
        assert run.clamped == 0
        for row in run.trace:
            assert 0.0 < row["c"] <= golden_constants.c_db * (1 + 1e-9)
            assert row["r"] > 0.0
            assert row["nu_min"] >= -SLACK

    def test_bookkeeping_identities(self, accepted):
        for row in accepted.trace:
            assert row["ser_deviation"] < IDENT
            assert row["mass_deviation"] < IDENT

    def test_mass_conservation(self, accepted):
        """Extracted weights plus the residual account for all the mass."""
        for row in accepted.trace:
            j = row["j"]
            total = row["r"] + sum(accepted.floor_weight(k, j)
                                   for k in range(1, j + 1))
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_per_step_minorization(self, golden, golden_constants):
        """Each residual law, evolved one step, clears the certified floor."""
        consts = golden_constants
        run = CouplingRun(golden, consts, point_mass(0, 2).w,
                          consts.t_ps + 4.0 * consts.t_db)
        floor = consts.c_db * consts.alpha_c
        while run.state["j"] < run.J:
            nu = run.state["nu"]
            evolved = dcne(golden, nu, consts.t_db).w
            assert float((evolved - floor).min()) >= -SLACK
            run.advance()

    def test_advance_beyond_horizon_raises(self, accepted):
        with pytest.raises(InductionBrokenError):
            accepted.advance()

    def test_residual_identity_helper(self, accepted):
        assert residual_identity(accepted) < IDENT
        with pytest.raises(ValueError):
            residual_identity(accepted, j=2)

    def test_horizon_laws_match_fresh_flows(self, golden, golden_constants,
                                            accepted):
        run = accepted
        direct = dcne(golden, point_mass(1, 2).w, run.t_h)
        np.testing.assert_allclose(run.law_at_horizon().w, direct.w,
                                   rtol=0, atol=1e-12)
        fresh = minorizing_measure(golden, golden_constants, run.t_h)
        np.testing.assert_allclose(run.minorizing_at_horizon().w, fresh.w,
                                   rtol=0, atol=1e-12)

    def test_domination_at_horizon(self, accepted):
        assert accepted.check_domination() >= -SLACK

    def test_dense_oracle_agrees_with_horizon_law(self, golden, accepted):
        q = orc.dense_q_from(golden.off.toarray(), golden.kill)
        w = point_mass(1, 2).w @ orc.dense_expm(q, accepted.t_h)
        np.testing.assert_allclose(accepted.law_at_horizon().w, w / w.sum(),
                                   rtol=0, atol=1e-11)

    def test_trace_row_fields(self, accepted):
        assert set(accepted.trace[0]) == {"j", "r", "c", "nu_min",
                                          "ser_deviation", "mass_deviation"}


class TestRunLadder:
    def test_long_run_accepted(self, ladder20, ladder20_constants):
        consts = ladder20_constants
        t_h = consts.t_ps + 11.0 * consts.t_db + 0.7
        run = CouplingRun(ladder20, consts, point_mass(4, 20).w, t_h)
        trace = run.run()
        assert len(trace) == run.J == 11
        assert run.clamped == 0
        assert max(r["ser_deviation"] for r in trace) < IDENT
        assert max(r["mass_deviation"] for r in trace) < IDENT
        assert run.check_domination() >= -SLACK

    def test_lattice_panels_match_fresh_flow(self, ladder20,
                                             ladder20_constants):
        consts = ladder20_constants
        t_h = consts.t_ps + 6.0 * consts.t_db + 1.3
        run = CouplingRun(ladder20, consts, np.full(20, 0.05), t_h)
        fresh = minorizing_measure(ladder20, consts, t_h)
        np.testing.assert_allclose(run.minorizing_at_horizon().w, fresh.w,
                                   rtol=0, atol=1e-12)

    def test_many_start_laws(self, ladder20, ladder20_constants):
        consts = ladder20_constants
        t_h = consts.t_ps + 5.0 * consts.t_db
        rng = np.random.default_rng(7)
        for _ in range(4):
            mu = rng.dirichlet(np.ones(20))
            run = CouplingRun(ladder20, consts, mu, t_h)
            run.run()
            assert run.state["j"] == run.J
            assert run.check_domination() >= -SLACK


class TestMinorizingMeasure:
    def test_empty_below_one_step(self, golden, golden_constants):
        consts = golden_constants
        mm = minorizing_measure(golden, consts, consts.t_ps
                                + 0.5 * consts.t_db)
        assert mm.w.sum() == 0.0

    def test_below_onset_raises(self, golden, golden_constants):
        with pytest.raises(HorizonTooShortError):
            minorizing_measure(golden, golden_constants,
                               0.5 * golden_constants.t_ps)

    def test_mass_formula(self, golden, golden_constants):
        consts = golden_constants
        for steps in (1, 3, 6):
            t_h = consts.t_ps + steps * consts.t_db + 0.25
            mm = minorizing_measure(golden, consts, t_h)
            J = horizon_steps(consts, t_h)
            assert J == steps
            assert mm.w.min() >= 0.0
            assert mm.w.sum() == pytest.approx(
                1.0 - (1.0 - consts.c_bar) ** J, abs=1e-12)

    def test_contact_rate_consistency(self, ladder20, ladder20_constants):
        """Missing mass decays at exactly the certified contact rate."""
        consts = ladder20_constants
        for steps in (2, 5, 9):
            t_h = consts.t_ps + steps * consts.t_db + 0.1
            mm = minorizing_measure(ladder20, consts, t_h)
            expected = math.exp(-consts.zeta * steps * consts.t_db)
            assert 1.0 - mm.w.sum() == pytest.approx(expected, rel=1e-12)


class TestFailureModes:
    @pytest.fixture()
    def hostile(self, golden_eigen):
        """Floor law concentrated on one state with an uncoverable weight."""
        return CouplingConstants(t_db=1.0, c_db=0.9, c_ps=1.0, t_ps=1.0,
                                 t_xt=0.0, n_rn=1, xi_rn=0.5,
                                 alpha_c=np.array([1.0, 0.0]))

    def test_uncertified_constants_break_the_induction(self, golden,
                                                       golden_eigen, hostile):
        run = CouplingRun(golden, hostile, golden_eigen.alpha.w, t_h=3.0)
        with pytest.raises(InductionBrokenError) as exc:
            run.run()
        # the failed state is preserved for post-mortem inspection
        assert exc.value.step == run.state["j"]
        assert exc.value.details
        assert {"j", "r", "nu"} <= set(run.state)

    def test_overclaimed_floor_loses_domination(self, golden, golden_eigen,
                                                hostile):
        run = CouplingRun(golden, hostile, golden_eigen.alpha.w, t_h=3.0)
        with pytest.raises(DominationViolatedError):
            run.check_domination()

    def test_horizon_below_onset(self, golden, golden_constants):
        with pytest.raises(HorizonTooShortError):
            CouplingRun(golden, golden_constants, point_mass(0, 2).w,
                        t_h=0.5 * golden_constants.t_ps)

    def test_massless_start_rejected(self, golden, golden_constants):
        with pytest.raises(ValueError):
            CouplingRun(golden, golden_constants, np.zeros(2),
                        t_h=golden_constants.t_ps + 2.0)


class TestLowerBound:
    def test_report_and_envelope(self, golden, golden_constants):
        consts = golden_constants
        mus = [point_mass(0, 2).w, point_mass(1, 2).w, np.array([0.5, 0.5])]
        pairs = [(2.0, 2.0), (2.5, 4.0), (4.0, 8.0), (8.0, 8.0)]
        report = verify_lower_bound(golden, consts, mus, pairs)
        assert [row["t1"] for row in report] == [p[0] for p in pairs]
        for row in report:
            J = horizon_steps(consts, row["t1"] - consts.t_xt)
            assert row["J"] == J
            assert row["residual"] == pytest.approx(
                (1.0 - consts.c_bar) ** J, rel=1e-12)
            assert row["envelope"] == pytest.approx(
                consts.bound_constant * math.exp(-consts.zeta * row["t1"]),
                rel=1e-12)
            assert row["worst_tv"] <= row["residual"] + SLACK
            assert 2.0 * row["residual"] <= row["envelope"] + SLACK

    def test_pair_ordering_guard(self, golden, golden_constants):
        mus = [point_mass(0, 2).w]
        with pytest.raises(ValueError):
            verify_lower_bound(golden, golden_constants, mus, [(1.0, 0.5)])
        with pytest.raises(ValueError):
            verify_lower_bound(golden, golden_constants, mus, [(0.1, 2.0)])

    def test_stationary_start_dominates_trivially(self, golden, golden_eigen):
        alpha = golden_eigen.alpha.w
        consts = stationary_constants(alpha)
        report = verify_lower_bound(golden, consts, [alpha],
                                    [(2.0, 5.0), (4.0, 4.0)])
        for row in report:
            assert row["worst_tv"] <= 1e-12

    def test_exponential_cauchy_property(self, golden, golden_constants):
        """Conditioned laws at increasing times form an exponential Cauchy
        sequence under the certified envelope."""
        consts = golden_constants
        mu = point_mass(0, 2).w
        for t1 in (2.0, 4.0, 7.0, 11.0):
            law1 = dcne(golden, mu, t1)
            for t2 in (t1, t1 + 3.0, t1 + 9.0):
                gap = tv_distance(law1, dcne(golden, mu, t2))
                envelope = consts.bound_constant * math.exp(-consts.zeta * t1)
                assert gap <= envelope + SLACK

    def test_pairwise_distance_beats_measured_decay(self, ladder20,
                                                    ladder20_constants):
        consts = ladder20_constants
        mus = [point_mass(0, 20).w, point_mass(11, 20).w]
        t1 = consts.t_ps + 4 * consts.t_db
        report = verify_lower_bound(ladder20, consts, mus,
                                    [(t1, t1 + consts.t_db)])
        assert report[0]["worst_tv"] <= report[0]["residual"] + SLACK


class TestConditionedMarginal:
    def test_matches_dense_two_sided_oracle(self, golden):
        q = orc.dense_q_from(golden.off.toarray(), golden.kill)
        mu = np.array([0.3, 0.7])
        for t_ev, t_h in [(0.7, 2.3), (2.3, 2.3), (0.0, 1.5)]:
            fwd = mu @ orc.dense_expm(q, t_ev)
            tail = orc.dense_expm(q, t_h - t_ev) @ np.ones(2)
            ref = fwd * tail
            ref /= ref.sum()
            got = conditioned_time_marginal(golden, mu, t_ev, t_h).w
            np.testing.assert_allclose(got, ref, rtol=0, atol=1e-12)

    def test_matches_dense_oracle_on_random_chain(self):
        rng = np.random.default_rng(31)
        off, kill = orc.random_subgenerator_arrays(rng, max_states=6)
        gen = qsdlab.SubMarkovGenerator(off, kill)
        q = orc.dense_q_from(off, kill)
        mu = orc.random_law(rng, gen.n_states)
        for t_ev, t_h in [(0.4, 1.9), (1.0, 1.0)]:
            fwd = mu @ orc.dense_expm(q, t_ev)
            tail = orc.dense_expm(q, t_h - t_ev) @ np.ones(gen.n_states)
            ref = fwd * tail
            ref /= ref.sum()
            got = conditioned_time_marginal(gen, mu, t_ev, t_h).w
            np.testing.assert_allclose(got, ref, rtol=0, atol=1e-11)

    def test_times_validated(self, golden):
        with pytest.raises(ValueError):
            conditioned_time_marginal(golden, np.array([0.5, 0.5]), 2.0, 1.0)
        with pytest.raises(ValueError):
            conditioned_time_marginal(golden, np.array([0.5, 0.5]), -0.5, 1.0)

    def test_final_marginal_is_the_horizon_floor(self, golden,
                                                 golden_constants):
        """At the horizon itself the conditioned-marginal floor coincides
        with the plain floor mixture."""
        consts = golden_constants
        t_h = consts.t_ps + 3.0 * consts.t_db + 0.4
        g = glb_minorant(golden, consts, t_ev=t_h, t_h=t_h)
        mm = minorizing_measure(golden, consts, t_h)
        np.testing.assert_allclose(g.w, mm.w, rtol=0, atol=1e-12)

    def test_lattice_depth_guard(self, golden, golden_constants):
        consts = golden_constants
        t_h = consts.t_ps + 3.0 * consts.t_db + 0.4
        with pytest.raises(ValueError):
            glb_minorant(golden, consts, t_ev=0.3 * consts.t_db, t_h=t_h)
        with pytest.raises(ValueError):
            glb_minorant(golden, consts, t_ev=t_h + 1.0, t_h=t_h)

    def test_conditioned_domination(self, golden, golden_constants):
        consts = golden_constants
        t_h = consts.t_ps + 3.0 * consts.t_db + 0.4
        J = horizon_steps(consts, t_h)
        for mu in (point_mass(0, 2).w, point_mass(1, 2).w):
            for t_ev in (t_h, J * consts.t_db + 0.1):
                worst = verify_glb(golden, consts, mu, t_ev=t_ev, t_h=t_h)
                assert worst >= -SLACK

    def test_conditioned_domination_on_ladder(self, ladder20,
                                              ladder20_constants):
        consts = ladder20_constants
        t_h = consts.t_ps + 4.0 * consts.t_db + 0.5
        worst = verify_glb(ladder20, consts, point_mass(2, 20).w,
                           t_ev=t_h, t_h=t_h)
        assert worst >= -SLACK
