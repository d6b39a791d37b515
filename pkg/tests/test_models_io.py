"""Model types, validation, specifications, and the text formats."""

import random
from fractions import Fraction

import pytest

import genmodels as g
from fscsynth.formats import (
    FormatError,
    parse_fsc,
    parse_instantiation,
    parse_param_groups,
    parse_pmc,
    parse_pomdp,
    parse_rational_function,
    parse_region,
    write_fsc,
    write_instantiation,
    write_param_groups,
    write_pmc,
    write_pomdp,
    write_rational_function,
    write_region,
)
from fscsynth.models import (
    INFINITE,
    Instantiation,
    Mdp,
    ModelError,
    Pomdp,
    apply_instantiation,
    check_well_defined,
    format_number,
    is_infinite,
    parse_spec,
)
from fscsynth.analysis import Region, reach_avoid_prob, expected_reward, state_eliminate
from fscsynth.fsc import uniform_fsc
from fscsynth.transforms import induced_pmc

F = Fraction


class TestRoundTrips:
    def test_pomdp(self):
        rng = random.Random(11)
        for m in [g.fork_pomdp(), g.loop_pomdp(), g.revisit_pomdp()] + [
                g.random_pomdp(rng) for _ in range(20)]:
            back = parse_pomdp(write_pomdp(m))
            assert back == m

    def test_pmc(self):
        rng = random.Random(12)
        models = [g.biased_choice_pmc(), induced_pmc(g.loop_pomdp(), 2)]
        models += [g.random_simple_pmc(rng, max_states=12) for _ in range(10)]
        for d in models:
            back = parse_pmc(write_pmc(d))
            assert back == d

    def test_parsed_pomdp_rows_sum_to_one(self):
        text = write_pomdp(g.fork_pomdp())
        m = parse_pomdp(text)
        for (_s, _a), row in m.trans.items():
            assert sum(row.values()) == 1

    def test_fsc(self):
        m = g.fork_pomdp()
        a = uniform_fsc(m, 2)
        back = parse_fsc(write_fsc(a))
        assert back.num_nodes == a.num_nodes
        assert back.initial_node == a.initial_node
        assert back.action_map == a.action_map
        assert back.memory_update == a.memory_update

    def test_instantiation(self):
        u = Instantiation({"p": F(1, 3), "q": F(2, 7)})
        back = parse_instantiation(write_instantiation(u))
        assert dict(back.values) == dict(u.values)

    def test_region(self):
        r = Region({"p": (F(1, 100), F(99, 100)), "q": (F(1, 2), F(1, 2))})
        assert parse_region(write_region(r)) == r

    def test_param_groups(self):
        groups = [["a", "b"], ["c"]]
        assert parse_param_groups(write_param_groups(groups)) == groups

    def test_rational_function(self):
        f = state_eliminate(g.biased_choice_pmc())
        assert parse_rational_function(write_rational_function(f)) == f

    def test_comment_lines_ignored(self):
        text = "# produced by hand\n" + write_pomdp(g.two_coin_pomdp())
        assert parse_pomdp(text) == g.two_coin_pomdp()


class TestValidation:
    def test_deadlock_rejected(self):
        with pytest.raises(ModelError, match="deadlock"):
            Mdp(2, 0, {(0, "a"): {1: F(1)}})

    def test_unused_observation_rejected(self):
        m = g.two_coin_pomdp()
        with pytest.raises(ModelError, match="never used"):
            Pomdp(m.mdp, 3, [0, 1, 1])

    def test_shared_observation_needs_equal_actions(self):
        trans = {
            (0, "a"): {1: F(1)},
            (1, "b"): {1: F(1)},
        }
        mdp = Mdp(2, 0, trans, goal={1})
        with pytest.raises(ModelError, match="share observation"):
            Pomdp(mdp, 1, [0, 0])

    def test_bad_distribution_rejected(self):
        with pytest.raises(ModelError, match="sums to"):
            Mdp(2, 0, {(0, "a"): {1: F(1, 2)}, (1, "a"): {1: F(1)}})

    def test_overlapping_labels_rejected(self):
        with pytest.raises(ModelError, match="overlap"):
            Mdp(2, 0, {(0, "a"): {1: F(1)}, (1, "a"): {1: F(1)}},
                goal={1}, bad={1})

    def test_parse_error_carries_line_number(self):
        text = write_pomdp(g.two_coin_pomdp()).replace("trans 0 a 1 0.2",
                                                       "trans 0 a 1 0.x")
        with pytest.raises(FormatError, match="line"):
            parse_pomdp(text)

    def test_goal_at_initial_is_accepted_and_trivial(self):
        mdp = Mdp(1, 0, {(0, "a"): {0: F(1)}}, goal={0})
        m = Pomdp(mdp, 1, [0])
        mc = apply_instantiation(induced_pmc(m, 1), Instantiation({})).model
        assert reach_avoid_prob(mc) == 1
        assert expected_reward(mc) == 0


class TestSpecifications:
    def test_reach_avoid_form(self):
        s = parse_spec("P>= 1/2 [!bad U goal]")
        assert s.kind == "reach_avoid"
        assert s.comparison == ">="
        assert s.threshold == F(1, 2)
        assert s.goal_label == "goal" and s.bad_label == "bad"
        assert parse_spec(str(s)) == s

    def test_plain_reach_form_has_no_avoid_label(self):
        s = parse_spec("P> 0.6 [F goal]")
        assert s.bad_label is None
        assert s.threshold == F(3, 5)
        assert parse_spec(str(s)) == s

    def test_reward_forms(self):
        s = parse_spec("Emin<= 4.01 [F goal]")
        assert s.kind == "expected_reward" and s.opt == "min"
        t = parse_spec("Emax> 2 [F goal]")
        assert t.opt == "max"
        assert parse_spec(str(s)) == s

    def test_satisfied_by(self):
        s = parse_spec("P> 0.5 [!bad U goal]")
        assert s.satisfied_by(F(3, 4))
        assert not s.satisfied_by(F(1, 2))
        assert parse_spec("Emin<= 4 [F goal]").satisfied_by(F(4))
        assert not parse_spec("Emin< 4 [F goal]").satisfied_by(INFINITE)

    def test_rejects_garbage(self):
        for bad in ("P> goal", "P> 1.5 [F goal]", "Q> 0 [F goal]", ""):
            with pytest.raises(ModelError):
                parse_spec(bad)


class TestNumbersAndInstantiations:
    def test_format_number(self):
        assert format_number(F(1, 2)) == "0.5"
        assert format_number(F(797, 1000)) == "0.797"
        assert format_number(F(1, 3)) == "1/3"
        assert format_number(F(-3, 4)) == "-0.75"
        assert format_number(F(7)) == "7"
        with pytest.raises(TypeError):
            format_number(0.5)

    def test_infinite_singleton_ordering(self):
        assert Infinite_roundtrip() is INFINITE
        assert INFINITE > F(10**9)
        assert not INFINITE < F(10**9)
        assert F(1) < INFINITE and F(1) <= INFINITE
        assert is_infinite(INFINITE) and is_infinite(float("inf"))
        assert not is_infinite(F(1))

    def test_apply_instantiation_commutes_with_evaluation(self):
        rng = random.Random(5)
        for _ in range(25):
            d = g.random_simple_pmc(rng, max_states=10)
            u = g.random_instantiation_for(d, rng)
            res = apply_instantiation(d, u)
            assert res.well_defined
            for s in d.states:
                for t, poly in d.row(s).items():
                    want = poly.evaluate(u.values)
                    if want == 0:
                        assert t not in res.model.row(s)
                    else:
                        assert res.model.row(s)[t] == want

    def test_apply_instantiation_flags_defects(self):
        d = g.biased_choice_pmc()
        res = apply_instantiation(d, Instantiation({"p": F(3, 2)}))
        assert not res.well_defined
        assert any("entry" in x for x in res.defects)

    def test_check_well_defined_levels(self):
        d = g.biased_choice_pmc()
        w = check_well_defined(d, Instantiation({"p": F(1, 2)}), eps=F(1, 10))
        assert w.well_defined and w.graph_preserving and w.eps_preserving
        w0 = check_well_defined(d, Instantiation({"p": F(0)}))
        assert w0.well_defined and not w0.graph_preserving
        weps = check_well_defined(d, Instantiation({"p": F(1, 100)}), eps=F(1, 10))
        assert weps.graph_preserving and not weps.eps_preserving


def Infinite_roundtrip():
    # the divergence marker is a singleton, whoever constructs it
    return type(INFINITE)()
