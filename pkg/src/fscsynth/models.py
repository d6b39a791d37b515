"""Model types: parametric MDPs/chains, POMDPs, instantiations, specifications.

The general carrier is the parametric MDP (Pmdp); Mdp, PmcT and Mc are its
concrete / single-action restrictions. Exact entries are Fractions or
Polynomials over Fractions; a float mode (same containers holding floats)
exists for search loops.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .polynomials import Polynomial, MissingParameterError


class ModelError(ValueError):
    """Semantic model defect (deadlock, bad row sum, inconsistency...)."""


class Infinite:
    """Sentinel for diverging expected rewards. Compares above every number."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __gt__(self, other):
        return not isinstance(other, Infinite)

    def __ge__(self, other):
        return True

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return isinstance(other, Infinite)

    def __repr__(self):
        return "infinity"

    def __float__(self):
        return float("inf")


INFINITE = Infinite()


def is_infinite(value) -> bool:
    import math

    return isinstance(value, Infinite) or (isinstance(value, float) and math.isinf(value))


def format_number(x) -> str:
    """Canonical text for an exact rational: integer, terminating decimal
    (up to 12 places), or a/b."""
    if isinstance(x, float):
        raise TypeError("refusing to serialize a float; rationalize first")
    f = Fraction(x)
    if f.denominator == 1:
        return str(f.numerator)
    d = f.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    places = max(twos, fives)
    if d == 1 and places <= 12:
        scaled = f.numerator * 10 ** places // f.denominator
        digits = str(abs(scaled)).rjust(places + 1, "0")
        sign = "-" if scaled < 0 else ""
        return "%s%s.%s" % (sign, digits[:-places], digits[-places:])
    return "%d/%d" % (f.numerator, f.denominator)


# ---------------------------------------------------------------------------
# parameters and instantiations


class ParameterTable:
    """Ordered parameter names with admissible intervals (default [0, 1])."""

    def __init__(self, names=(), intervals=None):
        self.names = list(names)
        if len(set(self.names)) != len(self.names):
            raise ModelError("duplicate parameter name")
        self.intervals = {n: (Fraction(0), Fraction(1)) for n in self.names}
        if intervals:
            for n, iv in intervals.items():
                if n not in self.intervals:
                    raise ModelError("interval for unknown parameter '%s'" % n)
                self.intervals[n] = (Fraction(iv[0]), Fraction(iv[1]))
        self.index = {n: i for i, n in enumerate(self.names)}

    def __len__(self):
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def __contains__(self, name):
        return name in self.index

    def __eq__(self, other):
        if not isinstance(other, ParameterTable):
            return NotImplemented
        return self.names == other.names and self.intervals == other.intervals

    def __repr__(self):
        return "ParameterTable(%r)" % (self.names,)


class Instantiation:
    """Maps parameter names to values; all-Fraction (exact) or all-float."""

    def __init__(self, values: Mapping):
        self.values = dict(values)
        self._rational = all(isinstance(v, (Fraction, int)) for v in self.values.values())
        if self._rational:
            self.values = {k: Fraction(v) for k, v in self.values.items()}
        else:
            self.values = {k: float(v) for k, v in self.values.items()}

    @property
    def is_rational(self):
        return self._rational

    def __getitem__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise MissingParameterError(name) from None

    def __contains__(self, name):
        return name in self.values

    def get(self, name, default=None):
        return self.values.get(name, default)

    def items(self):
        return self.values.items()

    def rationalized(self) -> "Instantiation":
        """Exact-mode copy; floats go through their shortest decimal repr, so
        the result survives text round trips unchanged."""
        if self._rational:
            return self
        return Instantiation({k: Fraction(repr(v)) for k, v in self.values.items()})

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, Instantiation):
            return NotImplemented
        return self.values == other.values

    def __repr__(self):
        return "Instantiation(%r)" % (self.values,)


def poly_eval(f: Polynomial, u) -> Fraction:
    """Evaluate a polynomial at an instantiation (exact or float mode).

    Unknown parameters raise MissingParameterError naming the parameter.
    """
    if isinstance(u, Instantiation):
        if u.is_rational:
            return f.evaluate(u.values)
        return f.evaluate_float(u.values)
    return f.evaluate(u)


# ---------------------------------------------------------------------------
# specifications


_PROB_COMPARISONS = (">", ">=")
_ALL_COMPARISONS = (">", ">=", "<", "<=")

REACH_AVOID = "reach_avoid"
EXPECTED_REWARD = "expected_reward"


@dataclass(frozen=True)
class Specification:
    """Reach-avoid probability or expected-reward property with a threshold.

    reach_avoid: value = Pr[not bad until goal], comparison in {>, >=},
    threshold in [0, 1). expected_reward: value = E[reward until goal], opt
    says which direction a synthesizer optimizes.
    """

    kind: str
    comparison: str
    threshold: Fraction
    opt: str | None = None
    goal_label: str = "goal"
    bad_label: str | None = "bad"

    def __post_init__(self):
        if self.kind == REACH_AVOID:
            if self.comparison not in _PROB_COMPARISONS:
                raise ModelError("probability specs use > or >=")
            if not (0 <= self.threshold < 1):
                raise ModelError(
                    "probability threshold %s outside [0, 1)" % self.threshold
                )
        elif self.kind == EXPECTED_REWARD:
            if self.comparison not in _ALL_COMPARISONS:
                raise ModelError("bad comparison %r" % self.comparison)
            if self.opt not in ("min", "max"):
                raise ModelError("expected-reward spec needs opt min|max")
        else:
            raise ModelError("unknown specification kind %r" % self.kind)

    def satisfied_by(self, value) -> bool:
        if is_infinite(value):
            return self.comparison in (">", ">=")
        t = self.threshold
        if self.comparison == ">":
            return value > t
        if self.comparison == ">=":
            return value >= t
        if self.comparison == "<":
            return value < t
        return value <= t

    @property
    def maximizing(self) -> bool:
        """Whether larger values are better for a synthesizer."""
        if self.kind == REACH_AVOID:
            return True
        return self.opt == "max"

    def __str__(self):
        ts = format_number(self.threshold)
        if self.kind == REACH_AVOID:
            if self.bad_label is None:
                return "P%s %s [F %s]" % (self.comparison, ts, self.goal_label)
            return "P%s %s [!%s U %s]" % (self.comparison, ts, self.bad_label, self.goal_label)
        return "E%s%s %s [F %s]" % (self.opt, self.comparison, ts, self.goal_label)


_P_SPEC = re.compile(
    r"^\s*P\s*(>=|>)\s*(\S+?)\s*\[\s*!\s*([A-Za-z_]\w*)\s+U\s+([A-Za-z_]\w*)\s*\]\s*$"
)
_PF_SPEC = re.compile(
    r"^\s*P\s*(>=|>)\s*(\S+?)\s*\[\s*F\s+([A-Za-z_]\w*)\s*\]\s*$"
)
_E_SPEC = re.compile(
    r"^\s*E\s*(min|max)\s*(<=|>=|<|>)\s*(\S+?)\s*\[\s*F\s+([A-Za-z_]\w*)\s*\]\s*$"
)


def _parse_threshold(tok: str) -> Fraction:
    try:
        return Fraction(tok)
    except (ValueError, ZeroDivisionError):
        raise ModelError("cannot parse threshold %r" % tok) from None


def parse_spec(text: str) -> Specification:
    """Parse a property string.

    Probability forms: ``P> 0.9 [!bad U goal]`` (also >=) and the avoid-free
    ``P> 0.9 [F goal]``. Reward form: ``Emin<= 10.5 [F goal]`` with min|max
    and any of < <= > >=. Thresholds are decimals or fractions, read exactly.
    """
    m = _P_SPEC.match(text)
    if m:
        cmp_, thr, bad_label, goal_label = m.groups()
        return Specification(REACH_AVOID, cmp_, _parse_threshold(thr),
                             goal_label=goal_label, bad_label=bad_label)
    m = _PF_SPEC.match(text)
    if m:
        cmp_, thr, goal_label = m.groups()
        return Specification(REACH_AVOID, cmp_, _parse_threshold(thr),
                             goal_label=goal_label, bad_label=None)
    m = _E_SPEC.match(text)
    if m:
        opt, cmp_, thr, goal_label = m.groups()
        return Specification(EXPECTED_REWARD, cmp_, _parse_threshold(thr),
                             opt=opt, goal_label=goal_label, bad_label=None)
    raise ModelError("cannot parse specification %r" % text)


# ---------------------------------------------------------------------------
# models


def _check_state(s, n, what):
    if not isinstance(s, int) or not 0 <= s < n:
        raise ModelError("%s references unknown state %r" % (what, s))


class Pmdp:
    """Parametric MDP: rows (state, action label) -> {successor: Polynomial}.

    The no-trivial-branch assumption (an entry that is neither the constant 0
    nor 1 needs a sibling successor) is enforced here because downstream
    constructions rely on it.
    """

    def __init__(self, num_states, initial, trans, params=None, rewards=None,
                 goal=(), bad=(), param_groups=None, meta=None, validate=True):
        self.num_states = num_states
        self.initial = initial
        # trans: {(state, action_label): {succ: Polynomial}}
        self.trans = trans
        self.params = params if params is not None else ParameterTable()
        self.rewards = dict(rewards or {})  # {(state, action_label): Fraction}
        self.goal = frozenset(goal)
        self.bad = frozenset(bad)
        self.param_groups = param_groups
        self.meta = dict(meta or {})
        if validate:
            self._validate()

    @property
    def states(self):
        return range(self.num_states)

    def actions(self, s) -> list:
        return sorted(a for (s2, a) in self.trans if s2 == s)

    @property
    def action_labels(self) -> list:
        return sorted({a for (_, a) in self.trans})

    def row(self, s, a):
        return self.trans[(s, a)]

    def _validate(self):
        _check_state(self.initial, self.num_states, "initial")
        seen = set()
        for (s, a), row in self.trans.items():
            _check_state(s, self.num_states, "transition source")
            if not row:
                raise ModelError("empty row for state %d action %s" % (s, a))
            seen.add(s)
            entries = list(row.items())
            for t, p in entries:
                _check_state(t, self.num_states, "transition target")
                if not isinstance(p, Polynomial):
                    raise ModelError("parametric entry expected at (%d,%s,%d)" % (s, a, t))
                if p.is_zero():
                    raise ModelError("explicit zero entry at (%d,%s,%d)" % (s, a, t))
                for name in p.variables():
                    if name not in self.params:
                        raise ModelError("undeclared parameter '%s' in row (%d,%s)" % (name, s, a))
                if len(entries) == 1 and not (p.is_constant() and p.constant_value() == 1):
                    raise ModelError(
                        "row (%d,%s) has a single branch with probability %s; "
                        "non-Dirac rows need at least two successors" % (s, a, p)
                    )
        for s in range(self.num_states):
            if s not in seen:
                raise ModelError("state %d has no enabled action (deadlock)" % s)
        for s in self.goal:
            _check_state(s, self.num_states, "goal label")
        for s in self.bad:
            _check_state(s, self.num_states, "bad label")
        if self.goal & self.bad:
            raise ModelError("goal and bad labels overlap: %s" % sorted(self.goal & self.bad))
        for (s, a), r in self.rewards.items():
            if (s, a) not in self.trans:
                raise ModelError("reward on missing row (%d,%s)" % (s, a))
            if not isinstance(r, (Fraction, Polynomial)) or (
                isinstance(r, Fraction) and r < 0
            ):
                raise ModelError("rewards must be nonnegative rationals")

    def __eq__(self, other):
        if not isinstance(other, Pmdp):
            return NotImplemented
        return (
            self.num_states == other.num_states
            and self.initial == other.initial
            and self.trans == other.trans
            and self.rewards == other.rewards
            and self.goal == other.goal
            and self.bad == other.bad
        )


class Mdp:
    """Concrete MDP: rows (state, action label) -> {succ: Fraction}, rows sum to 1."""

    def __init__(self, num_states, initial, trans, rewards=None, goal=(), bad=(),
                 meta=None, validate=True):
        self.num_states = num_states
        self.initial = initial
        self.trans = trans  # {(s, a): {t: Fraction}}
        self.rewards = dict(rewards or {})
        self.goal = frozenset(goal)
        self.bad = frozenset(bad)
        self.meta = dict(meta or {})
        if validate:
            self._validate()

    @property
    def states(self):
        return range(self.num_states)

    def actions(self, s) -> list:
        return sorted(a for (s2, a) in self.trans if s2 == s)

    @property
    def action_labels(self) -> list:
        return sorted({a for (_, a) in self.trans})

    def row(self, s, a):
        return self.trans[(s, a)]

    def _validate(self):
        _check_state(self.initial, self.num_states, "initial")
        seen = set()
        for (s, a), row in self.trans.items():
            _check_state(s, self.num_states, "transition source")
            seen.add(s)
            total = Fraction(0)
            for t, p in row.items():
                _check_state(t, self.num_states, "transition target")
                if not isinstance(p, Fraction) or p <= 0 or p > 1:
                    raise ModelError(
                        "probability %r at (%d,%s,%d) outside (0,1]" % (p, s, a, t)
                    )
                total += p
            if total != 1:
                raise ModelError("row (%d,%s) sums to %s, expected 1" % (s, a, total))
        for s in range(self.num_states):
            if s not in seen:
                raise ModelError("state %d has no enabled action (deadlock)" % s)
        if self.goal & self.bad:
            raise ModelError("goal and bad labels overlap")
        for (s, a), r in self.rewards.items():
            if (s, a) not in self.trans:
                raise ModelError("reward on missing row (%d,%s)" % (s, a))
            if r < 0:
                raise ModelError("negative reward at (%d,%s)" % (s, a))

    def __eq__(self, other):
        if not isinstance(other, Mdp):
            return NotImplemented
        return (
            self.num_states == other.num_states
            and self.initial == other.initial
            and self.trans == other.trans
            and self.rewards == other.rewards
            and self.goal == other.goal
            and self.bad == other.bad
        )


class Pomdp:
    """POMDP over a concrete underlying MDP.

    obs[s] is the observation id of state s; states with equal observations
    must enable identical action sets (checked). Every observation id below
    num_obs must be used by some state.
    """

    def __init__(self, mdp: Mdp, num_obs: int, obs, meta=None, validate=True):
        self.mdp = mdp
        self.num_obs = num_obs
        self.obs = tuple(obs)
        self.meta = dict(meta or {})
        self._obs_actions = None
        if validate:
            self._validate()

    # delegation
    @property
    def num_states(self):
        return self.mdp.num_states

    @property
    def states(self):
        return self.mdp.states

    @property
    def initial(self):
        return self.mdp.initial

    @property
    def trans(self):
        return self.mdp.trans

    @property
    def rewards(self):
        return self.mdp.rewards

    @property
    def goal(self):
        return self.mdp.goal

    @property
    def bad(self):
        return self.mdp.bad

    def actions(self, s):
        return self.mdp.actions(s)

    def obs_actions(self, z) -> list:
        """Action set A(z), shared by construction among states observing z."""
        if self._obs_actions is None:
            table = {}
            for s in self.states:
                table.setdefault(self.obs[s], self.mdp.actions(s))
            self._obs_actions = table
        return self._obs_actions[z]

    def states_of_obs(self, z) -> list:
        return [s for s in self.states if self.obs[s] == z]

    def _validate(self):
        if len(self.obs) != self.mdp.num_states:
            raise ModelError(
                "observation list has %d entries for %d states"
                % (len(self.obs), self.mdp.num_states)
            )
        used = {}
        for s, z in enumerate(self.obs):
            if not 0 <= z < self.num_obs:
                raise ModelError("state %d observes unknown observation %d" % (s, z))
            used.setdefault(z, s)
        for z in range(self.num_obs):
            if z not in used:
                raise ModelError("observation %d declared but never used" % z)
        # same observation => same action set
        rep = {}
        for s in self.states:
            z = self.obs[s]
            acts = self.mdp.actions(s)
            if z in rep:
                s0, acts0 = rep[z]
                if acts0 != acts:
                    raise ModelError(
                        "states %d and %d share observation %d but enable %s vs %s"
                        % (s0, s, z, acts0, acts)
                    )
            else:
                rep[z] = (s, acts)

    def __eq__(self, other):
        if not isinstance(other, Pomdp):
            return NotImplemented
        return (
            self.mdp == other.mdp
            and self.num_obs == other.num_obs
            and self.obs == other.obs
        )


class PmcT:
    """Parametric Markov chain: rows state -> {successor: Polynomial}.

    `simple` records whether every entry is a constant, a bare parameter p,
    or 1-p. `param_groups`, when present, lists parameter groups whose values
    (plus an implicit residual) must form a probability distribution; the
    induced/substituted constructions record them, parsed pMCs normally have
    none (but simple pMCs get singleton groups inferred, see
    `ensure_param_groups`).
    """

    def __init__(self, num_states, initial, trans, params=None, rewards=None,
                 goal=(), bad=(), param_groups=None, meta=None, validate=True):
        self.num_states = num_states
        self.initial = initial
        self.trans = trans  # {s: {t: Polynomial}}
        self.params = params if params is not None else ParameterTable()
        self.rewards = dict(rewards or {})  # {s: Polynomial}
        self.goal = frozenset(goal)
        self.bad = frozenset(bad)
        self.param_groups = param_groups
        self.meta = dict(meta or {})
        self._simple = None
        if validate:
            self._validate()

    @property
    def states(self):
        return range(self.num_states)

    def row(self, s):
        return self.trans.get(s, {})

    def _validate(self):
        _check_state(self.initial, self.num_states, "initial")
        for s in range(self.num_states):
            row = self.trans.get(s)
            if not row:
                raise ModelError("state %d has no outgoing transition (deadlock)" % s)
            entries = list(row.items())
            for t, p in entries:
                _check_state(t, self.num_states, "transition target")
                if not isinstance(p, Polynomial):
                    raise ModelError("Polynomial entry expected at (%d,%d)" % (s, t))
                if p.is_zero():
                    raise ModelError("explicit zero entry at (%d,%d)" % (s, t))
                for name in p.variables():
                    if name not in self.params:
                        raise ModelError(
                            "undeclared parameter '%s' in row of state %d" % (name, s)
                        )
                if len(entries) == 1 and not (p.is_constant() and p.constant_value() == 1):
                    raise ModelError(
                        "state %d has a single branch with probability %s; "
                        "non-Dirac rows need at least two successors" % (s, p)
                    )
        if self.goal & self.bad:
            raise ModelError("goal and bad labels overlap")
        for s in self.goal | self.bad:
            _check_state(s, self.num_states, "label")
        for s, r in self.rewards.items():
            _check_state(s, self.num_states, "reward")
            if not isinstance(r, Polynomial):
                raise ModelError("reward entries must be Polynomials")

    @property
    def simple(self) -> bool:
        """True iff every entry is a constant, a parameter p, or 1-p."""
        if self._simple is None:
            self._simple = all(
                _entry_is_simple(p) for row in self.trans.values() for p in row.values()
            )
        return self._simple

    def rows_in_simple_form(self) -> bool:
        """Entry-wise simple and every row either all-constant summing to 1
        or exactly {p, 1-p} for one parameter."""
        if not self.simple:
            return False
        for s in self.states:
            total = Polynomial()
            for p in self.row(s).values():
                total = total + p
            if not (total.is_constant() and total.constant_value() == 1):
                return False
        return True

    def ensure_param_groups(self):
        """Groups for the synthesis simplex structure.

        Recorded groups win; otherwise simple pMCs get one singleton group per
        parameter (p plus residual 1-p). Raises for non-simple pMCs without
        recorded structure.
        """
        if self.param_groups is not None:
            return self.param_groups
        if self.simple:
            return [[n] for n in self.params.names]
        raise ModelError(
            "pMC has no recorded parameter-group structure and is not simple"
        )

    def __eq__(self, other):
        if not isinstance(other, PmcT):
            return NotImplemented
        return (
            self.num_states == other.num_states
            and self.initial == other.initial
            and self.trans == other.trans
            and self.rewards == other.rewards
            and self.goal == other.goal
            and self.bad == other.bad
            and self.params == other.params
        )


def _entry_is_simple(p: Polynomial) -> bool:
    if p.is_constant():
        return True
    if len(p.terms) == 1:
        ((mono, c),) = p.terms.items()
        return c == 1 and len(mono) == 1 and mono[0][1] == 1
    if len(p.terms) == 2 and () in p.terms and p.terms[()] == 1:
        others = [(m, c) for m, c in p.terms.items() if m != ()]
        ((mono, c),) = others
        return c == -1 and len(mono) == 1 and mono[0][1] == 1
    return False


class Mc:
    """Concrete Markov chain. State ids need not be contiguous (products keep
    their full-space numbering and retain only the reachable fragment)."""

    def __init__(self, states, initial, trans, rewards=None, goal=(), bad=(),
                 meta=None, validate=True):
        self.states = tuple(sorted(states))
        self.initial = initial
        self.trans = trans  # {s: {t: number}}
        self.rewards = dict(rewards or {})  # {s: number}
        self.goal = frozenset(goal)
        self.bad = frozenset(bad)
        self.meta = dict(meta or {})
        first = next(iter(trans.values()), None)
        v = next(iter(first.values()), None) if first else None
        self.exact = not isinstance(v, float)
        if validate:
            self._validate()

    def row(self, s):
        return self.trans.get(s, {})

    def _validate(self):
        sset = set(self.states)
        if self.initial not in sset:
            raise ModelError("initial state %r missing" % (self.initial,))
        for s in self.states:
            row = self.trans.get(s)
            if not row:
                raise ModelError("state %r has no outgoing transition" % (s,))
            total = sum(row.values())
            if self.exact:
                if total != 1:
                    raise ModelError("row %r sums to %s" % (s, total))
            elif abs(total - 1.0) > 1e-9:
                raise ModelError("row %r sums to %r" % (s, total))
            for t, p in row.items():
                if t not in sset:
                    raise ModelError("edge %r -> %r leaves the state set" % (s, t))
                if p < 0 or p > 1:
                    raise ModelError("probability %r at (%r,%r)" % (p, s, t))
        if self.goal & self.bad:
            raise ModelError("goal and bad labels overlap")

    def __eq__(self, other):
        if not isinstance(other, Mc):
            return NotImplemented
        return (
            self.states == other.states
            and self.initial == other.initial
            and self.trans == other.trans
            and self.rewards == other.rewards
            and self.goal == other.goal
            and self.bad == other.bad
        )


# ---------------------------------------------------------------------------
# instantiation


@dataclass
class WellDefinedness:
    well_defined: bool
    graph_preserving: bool
    eps_preserving: bool | None
    defects: list = field(default_factory=list)


@dataclass
class InstantiationResult:
    model: object  # Mdp | Mc (rows may be defective when not well_defined)
    well_defined: bool
    defects: list


def _group_defects(model, u) -> list:
    """Sub-distribution constraints from recorded parameter groups.

    Groups catch strategy-level defects that edge sums can hide: a negative
    residual inside one summand may cancel against a positive sibling term.
    """
    groups = getattr(model, "param_groups", None)
    if not groups:
        return []
    defects = []
    for group in groups:
        total = 0
        for name in group:
            v = u[name]
            if v < 0 or v > 1:
                defects.append("parameter %s = %s outside [0, 1]" % (name, v))
            total = total + v
        if total > 1:
            defects.append(
                "group {%s} sums to %s; residual branch weight %s is negative"
                % (", ".join(group), total, 1 - total)
            )
    return defects


def _eval_entry(p: Polynomial, u: Instantiation):
    if u.is_rational:
        return p.evaluate(u.values)
    return p.evaluate_float(u.values)


def apply_instantiation(model, u) -> InstantiationResult:
    """Substitute parameter values into a Pmdp or PmcT.

    Never raises on a bad valuation: the result is tagged not-well-defined
    with a defect list naming the offending rows (and parameter groups when
    the model records them). The returned concrete model skips validation in
    that case.
    """
    if not isinstance(u, Instantiation):
        u = Instantiation(u)
    defects = _group_defects(model, u)
    one = Fraction(1) if u.is_rational else 1.0
    tol = 0 if u.is_rational else 1e-9

    if isinstance(model, PmcT):
        trans = {}
        for s in model.states:
            row_out = {}
            total = 0
            for t, p in model.row(s).items():
                v = _eval_entry(p, u)
                if v < 0 or v > 1:
                    defects.append("entry (%d,%d) evaluates to %s" % (s, t, v))
                total += v
                if v != 0:
                    row_out[t] = v
            if abs(total - one) > tol:
                defects.append("row of state %d sums to %s" % (s, total))
            trans[s] = row_out
        rewards = {s: _eval_entry(r, u) for s, r in model.rewards.items()}
        ok = not defects
        mc = Mc(list(model.states), model.initial, trans, rewards,
                model.goal, model.bad, meta=dict(model.meta), validate=False)
        if ok:
            mc._validate()
        return InstantiationResult(mc, ok, defects)

    if isinstance(model, Pmdp):
        trans = {}
        for (s, a), row in model.trans.items():
            row_out = {}
            total = 0
            for t, p in row.items():
                v = _eval_entry(p, u)
                if v < 0 or v > 1:
                    defects.append("entry (%d,%s,%d) evaluates to %s" % (s, a, t, v))
                total += v
                if v != 0:
                    row_out[t] = v
            if abs(total - one) > tol:
                defects.append("row (%d,%s) sums to %s" % (s, a, total))
            trans[(s, a)] = row_out
        rewards = {}
        for key, r in model.rewards.items():
            rewards[key] = _eval_entry(r, u) if isinstance(r, Polynomial) else r
        ok = not defects
        mdp = Mdp(model.num_states, model.initial, trans, rewards,
                  model.goal, model.bad, validate=False)
        if ok:
            mdp._validate()
        return InstantiationResult(mdp, ok, defects)

    raise TypeError("apply_instantiation expects Pmdp or PmcT")


def check_well_defined(model, u, eps=None) -> WellDefinedness:
    """Classify an instantiation: well-defined / graph-preserving /
    eps-preserving (the latter only when eps is given).

    graph_preserving: every non-constant entry evaluates strictly inside
    (0, 1). eps_preserving: inside [eps, 1-eps]. Both are entry-level; on
    non-simple pMCs an entry can be a product of parameters, so
    eps-preservation of entries is stronger than parameter-level min-eps.
    """
    if not isinstance(u, Instantiation):
        u = Instantiation(u)
    res = apply_instantiation(model, u)
    graph = res.well_defined
    epsp = None if eps is None else res.well_defined

    def rows():
        if isinstance(model, PmcT):
            for s in model.states:
                for t, p in model.row(s).items():
                    yield ("(%d,%d)" % (s, t)), p
        else:
            for (s, a), row in model.trans.items():
                for t, p in row.items():
                    yield ("(%d,%s,%d)" % (s, a, t)), p

    defects = list(res.defects)
    if res.well_defined:
        for where, p in rows():
            if p.is_constant():
                continue
            v = _eval_entry(p, u)
            if not (0 < v < 1):
                graph = False
                defects.append("entry %s evaluates to boundary value %s" % (where, v))
            if eps is not None and not (eps <= v <= 1 - eps):
                epsp = False
    return WellDefinedness(res.well_defined, res.well_defined and graph, epsp, defects)
