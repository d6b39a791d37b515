"""Quantitative analysis: chain/MDP model checking, qualitative sets,
closed forms by state elimination, and sound bounds over parameter regions.

Exact mode works in Fractions end to end (fraction-free Gaussian elimination
for linear systems, policy iteration for optima); float mode assembles the
same systems in numpy and uses dense solves for small systems or the
iterative kernel above the size cutoff.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ._kernels import TermTable, solve_linear
from .models import (
    EXPECTED_REWARD,
    INFINITE,
    Instantiation,
    Mc,
    Mdp,
    ModelError,
    PmcT,
    REACH_AVOID,
    Specification,
    apply_instantiation,
    is_infinite,
)
from .polynomials import RF_ONE, RF_ZERO, Polynomial, RationalFunction

GS_TOL = 1e-12
GS_CAP = 10 ** 6
DENSE_LIMIT = 600


# ---------------------------------------------------------------------------
# qualitative sets


@dataclass(frozen=True)
class QualitativeSets:
    s_zero: frozenset
    s_one: frozenset


def qualitative_precompute(graph, goal, bad) -> QualitativeSets:
    """Value-0 and value-1 states for reach-avoid, from the graph of
    possibly-positive edges only.

    s_zero: cannot reach goal while avoiding bad. s_one: cannot reach s_zero
    before goal (goal treated as absorbing), hence value 1 in every chain
    with exactly this support.
    """
    goal = set(goal)
    bad = set(bad)
    rev = {s: [] for s in graph}
    for s, succs in graph.items():
        for t in succs:
            rev.setdefault(t, []).append(s)
    reach = set(goal)
    stack = list(goal)
    while stack:
        t = stack.pop()
        for s in rev.get(t, ()):
            if s not in reach and s not in bad:
                reach.add(s)
                stack.append(s)
    s_zero = frozenset(s for s in graph if s not in reach)
    lose = set(s_zero)
    stack = list(lose)
    while stack:
        t = stack.pop()
        for s in rev.get(t, ()):
            if s not in lose and s not in goal:
                lose.add(s)
                stack.append(s)
    s_one = frozenset(s for s in graph if s not in lose)
    return QualitativeSets(s_zero, s_one)


def _reachable(graph, start, absorbing=frozenset()):
    seen = {start}
    stack = [start]
    while stack:
        s = stack.pop()
        if s in absorbing:
            continue
        for t in graph.get(s, ()):
            if t not in seen:
                seen.add(t)
                stack.append(t)
    return seen


# ---------------------------------------------------------------------------
# linear solving


def solve_exact(rows, c):
    """Solve x = A x + c in Fractions. rows[i]: {j: a_ij} over 0..n-1.

    Fraction-free (Bareiss) elimination on an integer-scaled augmented
    matrix; intermediate divisions are exact by construction.
    """
    n = len(c)
    if n == 0:
        return []
    M = []
    for i in range(n):
        row = [Fraction(0)] * (n + 1)
        row[i] = Fraction(1)
        for j, a in rows[i].items():
            row[j] -= a
        row[n] = Fraction(c[i])
        scale = math.lcm(*[v.denominator for v in row])
        M.append([int(v * scale) for v in row])
    prev = 1
    for k in range(n):
        piv = None
        for r in range(k, n):
            if M[r][k] != 0:
                piv = r
                break
        if piv is None:
            raise ModelError("singular linear system")
        if piv != k:
            M[k], M[piv] = M[piv], M[k]
        mk = M[k]
        for i in range(k + 1, n):
            mi = M[i]
            mik = mi[k]
            for j in range(k + 1, n + 1):
                mi[j] = (mk[k] * mi[j] - mik * mk[j]) // prev
            mi[k] = 0
        prev = mk[k]
    x = [Fraction(0)] * n
    for i in reversed(range(n)):
        acc = Fraction(M[i][n])
        for j in range(i + 1, n):
            if M[i][j]:
                acc -= M[i][j] * x[j]
        x[i] = acc / M[i][i]
    return x


def solve_float(rows, c):
    """Float companion of solve_exact: dense below DENSE_LIMIT, otherwise
    iterative kernel sweeps with a dense rescue if the cap is hit."""
    n = len(c)
    if n == 0:
        return np.zeros(0)
    cv = np.asarray([float(v) for v in c], dtype=np.float64)
    if n <= DENSE_LIMIT:
        return _dense_solve(rows, cv)
    indptr = [0]
    indices = []
    data = []
    for i in range(n):
        for j, a in rows[i].items():
            indices.append(j)
            data.append(float(a))
        indptr.append(len(indices))
    x = np.zeros(n)
    _, delta = solve_linear(
        np.asarray(indptr, dtype=np.intc), np.asarray(indices, dtype=np.intc),
        np.asarray(data), cv, x, GS_TOL, GS_CAP,
    )
    if delta > GS_TOL:
        return _dense_solve(rows, cv)
    return x


def _dense_solve(rows, cv):
    n = len(cv)
    A = np.zeros((n, n))
    for i in range(n):
        for j, a in rows[i].items():
            A[i, j] += float(a)
    return np.linalg.solve(np.eye(n) - A, cv)


# ---------------------------------------------------------------------------
# Markov chain values


def _mc_graph(mc):
    return {s: tuple(mc.row(s)) for s in mc.states}


def _reach_system(mc, idx, q):
    rows = []
    c = []
    for s in idx:
        row = {}
        acc = Fraction(0) if mc.exact else 0.0
        for t, p in mc.row(s).items():
            if t in q.s_one:
                acc += p
            elif t in idx:
                row[idx[t]] = p
        rows.append(row)
        c.append(acc)
    return rows, c


def reach_avoid_prob(mc: Mc, goal=None, bad=None):
    """Probability of reaching goal while avoiding bad, from the initial
    state. Exact (Fraction) or float, following the chain's entry type."""
    goal = mc.goal if goal is None else frozenset(goal)
    bad = mc.bad if bad is None else frozenset(bad)
    q = qualitative_precompute(_mc_graph(mc), goal, bad)
    if mc.initial in q.s_one:
        return Fraction(1) if mc.exact else 1.0
    if mc.initial in q.s_zero:
        return Fraction(0) if mc.exact else 0.0
    idx = {s: i for i, s in enumerate(
        s for s in mc.states if s not in q.s_zero and s not in q.s_one)}
    rows, c = _reach_system(mc, idx, q)
    if mc.exact:
        return solve_exact(rows, c)[idx[mc.initial]]
    return float(solve_float(rows, c)[idx[mc.initial]])


def expected_reward(mc: Mc, goal=None):
    """Expected accumulated reward until goal; infinite when the goal is
    reached with probability below one."""
    goal = mc.goal if goal is None else frozenset(goal)
    if mc.initial in goal:
        return Fraction(0) if mc.exact else 0.0
    graph = _mc_graph(mc)
    q = qualitative_precompute(graph, goal, ())
    if mc.initial not in q.s_one:
        return INFINITE if mc.exact else math.inf
    relevant = _reachable(graph, mc.initial, absorbing=goal)
    idx = {s: i for i, s in enumerate(s for s in sorted(relevant) if s not in goal)}
    rows = []
    c = []
    zero = Fraction(0) if mc.exact else 0.0
    for s in idx:
        row = {}
        for t, p in mc.row(s).items():
            if t not in goal:
                row[idx[t]] = p
        rows.append(row)
        c.append(mc.rewards.get(s, zero))
    if mc.exact:
        return solve_exact(rows, c)[idx[mc.initial]]
    return float(solve_float(rows, c)[idx[mc.initial]])


def _spec_bad(model, spec):
    # a spec without an avoid label reads the plain reach probability
    return model.bad if spec.bad_label is not None else frozenset()


def check_mc(mc: Mc, spec: Specification):
    if spec.kind == REACH_AVOID:
        return reach_avoid_prob(mc, bad=_spec_bad(mc, spec))
    return expected_reward(mc)


# ---------------------------------------------------------------------------
# MDP optima (exact policy iteration)


@dataclass
class MdpResult:
    value: object
    strategy: dict = field(default_factory=dict)


def _mdp_any_graph(mdp):
    g = {s: set() for s in mdp.states}
    for (s, _a), row in mdp.trans.items():
        g[s].update(row)
    return g


def _prob1e(mdp: Mdp, goal, bad):
    """States with SOME strategy reaching goal almost surely while avoiding
    bad, plus a witness action per state (standard nested fixpoint)."""
    goal = set(goal)
    X = set(mdp.states) - set(bad)
    witness = {}
    while True:
        Y = set(g for g in goal if g in X)
        w = {}
        grew = True
        while grew:
            grew = False
            for s in X - Y:
                for a in mdp.actions(s):
                    row = mdp.trans[(s, a)]
                    if all(t in X for t in row) and any(t in Y for t in row):
                        Y.add(s)
                        w[s] = a
                        grew = True
                        break
        if Y == X:
            witness = w
            break
        X = Y
    return frozenset(X), witness


def _proper_initial_policy(mdp, U, known):
    """Pick actions so every U state leaks toward `known` (assignment by
    backward layers); the induced system is then nonsingular."""
    policy = {}
    settled = set(known)
    unassigned = set(U)
    while unassigned:
        progress = False
        for s in list(unassigned):
            for a in mdp.actions(s):
                if any(t in settled for t in mdp.trans[(s, a)]):
                    policy[s] = a
                    unassigned.discard(s)
                    settled.add(s)
                    progress = True
                    break
        if not progress:
            raise ModelError("no proper policy exists on the uncertain states")
    return policy


def _policy_value(mdp, U, idx, policy, val_of, reward_of=None):
    rows = []
    c = []
    for s in U:
        a = policy[s]
        row = {}
        acc = Fraction(0)
        for t, p in mdp.trans[(s, a)].items():
            if t in idx:
                row[idx[t]] = p
            else:
                acc += p * val_of(t)
        if reward_of is not None:
            acc += reward_of(s, a)
        rows.append(row)
        c.append(acc)
    return solve_exact(rows, c)


def _proper_initial_policy_restricted(mdp, U, known, acts):
    policy = {}
    settled = set(known)
    unassigned = set(U)
    while unassigned:
        progress = False
        for s in list(unassigned):
            for a in acts(s):
                if any(t in settled for t in mdp.trans[(s, a)]):
                    policy[s] = a
                    unassigned.discard(s)
                    settled.add(s)
                    progress = True
                    break
        if not progress:
            raise ModelError("no proper policy exists on the uncertain states")
    return policy


def mdp_optimal(mdp: Mdp, spec: Specification) -> MdpResult:
    """Optimal value of the fully observable MDP: max reach-avoid
    probability, or min/max expected reward, with a memoryless deterministic
    strategy on the states where the choice matters. Exact."""
    if spec.kind == REACH_AVOID:
        return _mdp_max_reach(mdp, mdp.goal, _spec_bad(mdp, spec))
    if spec.opt == "min":
        return _mdp_min_reward(mdp, mdp.goal)
    return _mdp_max_reward(mdp, mdp.goal)


def _mdp_max_reach(mdp, goal, bad):
    goal = set(goal)
    bad = set(bad)
    rev = {s: [] for s in mdp.states}
    for (s, _a), row in mdp.trans.items():
        for t in row:
            rev[t].append(s)
    reach = set(goal)
    stack = list(goal)
    while stack:
        t = stack.pop()
        for s in rev[t]:
            if s not in reach and s not in bad:
                reach.add(s)
                stack.append(s)
    s_zero = frozenset(s for s in mdp.states if s not in reach)
    s_one, witness = _prob1e(mdp, goal, bad)
    U = [s for s in mdp.states if s not in s_one and s not in s_zero]
    if mdp.initial in s_one:
        return MdpResult(Fraction(1), dict(witness))
    if mdp.initial in s_zero:
        return MdpResult(Fraction(0), dict(witness))
    values, policy = _policy_iterate_reach(mdp, U, s_one, s_zero)
    strategy = dict(witness)
    strategy.update(policy)
    return MdpResult(values[mdp.initial], strategy)


def _policy_iterate_reach(mdp, U, s_one, s_zero):
    idx = {s: i for i, s in enumerate(U)}
    policy = _proper_initial_policy(mdp, U, list(s_one) + list(s_zero))

    def boundary(t):
        return Fraction(1) if t in s_one else Fraction(0)

    while True:
        x = _policy_value(mdp, U, idx, policy, boundary)

        switched = False
        for s in U:
            best_a = policy[s]
            best_q = x[idx[s]]
            for a in mdp.actions(s):
                if a == policy[s]:
                    continue
                acc = Fraction(0)
                for t, p in mdp.trans[(s, a)].items():
                    acc += p * (x[idx[t]] if t in idx else boundary(t))
                if acc > best_q:
                    best_q = acc
                    best_a = a
            if best_a != policy[s]:
                policy[s] = best_a
                switched = True
        if not switched:
            return {s: x[idx[s]] for s in U}, policy


def _mdp_min_reward(mdp, goal):
    goal = set(goal)
    p1e, witness = _prob1e(mdp, goal, ())
    if mdp.initial not in p1e:
        return MdpResult(INFINITE, {})
    if mdp.initial in goal:
        return MdpResult(Fraction(0), {})

    def acts(s):
        # actions leaving the almost-sure set risk infinite cost
        out = [a for a in mdp.actions(s)
               if all(t in p1e for t in mdp.trans[(s, a)])]
        return out

    U = [s for s in mdp.states if s in p1e and s not in goal]
    idx = {s: i for i, s in enumerate(U)}
    policy = _proper_initial_policy_restricted(mdp, U, list(goal), acts)

    def reward_of(s, a):
        return mdp.rewards.get((s, a), Fraction(0))

    while True:
        x = _policy_value(mdp, U, idx, policy,
                          lambda t: Fraction(0), reward_of)
        switched = False
        for s in U:
            best_a = policy[s]
            best_q = x[idx[s]]
            for a in acts(s):
                if a == policy[s]:
                    continue
                acc = reward_of(s, a)
                for t, p in mdp.trans[(s, a)].items():
                    if t in idx:
                        acc += p * x[idx[t]]
                if acc < best_q:
                    best_q = acc
                    best_a = a
            if best_a != policy[s]:
                policy[s] = best_a
                switched = True
        if not switched:
            return MdpResult(x[idx[mdp.initial]], policy)


def _mdp_max_reward(mdp, goal):
    goal = set(goal)
    if mdp.initial in goal:
        return MdpResult(Fraction(0), {})
    # states that can avoid the goal forever under some strategy
    Z = set(mdp.states) - goal
    while True:
        keep = set()
        for s in Z:
            for a in mdp.actions(s):
                if all(t in Z for t in mdp.trans[(s, a)]):
                    keep.add(s)
                    break
        if keep == Z:
            break
        Z = keep
    rev = {s: [] for s in mdp.states}
    for (s, _a), row in mdp.trans.items():
        if s not in goal:
            for t in row:
                rev[t].append(s)
    danger = set(Z)
    stack = list(Z)
    while stack:
        t = stack.pop()
        for s in rev[t]:
            if s not in danger and s not in goal:
                danger.add(s)
                stack.append(s)
    if mdp.initial in danger:
        return MdpResult(INFINITE, {})
    relevant = _reachable(_mdp_any_graph(mdp), mdp.initial, absorbing=goal)
    U = [s for s in sorted(relevant) if s not in goal]
    idx = {s: i for i, s in enumerate(U)}
    policy = {s: mdp.actions(s)[0] for s in U}

    def reward_of(s, a):
        return mdp.rewards.get((s, a), Fraction(0))

    while True:
        x = _policy_value(mdp, U, idx, policy, lambda t: Fraction(0), reward_of)
        switched = False
        for s in U:
            best_a = policy[s]
            best_q = x[idx[s]]
            for a in mdp.actions(s):
                if a == policy[s]:
                    continue
                acc = reward_of(s, a)
                for t, p in mdp.trans[(s, a)].items():
                    if t in idx:
                        acc += p * x[idx[t]]
                if acc > best_q:
                    best_q = acc
                    best_a = a
            if best_a != policy[s]:
                policy[s] = best_a
                switched = True
        if not switched:
            return MdpResult(x[idx[mdp.initial]], policy)


# ---------------------------------------------------------------------------
# state elimination (closed forms)


def _pmc_graph(d: PmcT):
    return {s: tuple(d.row(s)) for s in d.states}


_GOOD = -1  # merged value-one sink during elimination


def _pick_elimination_order(w, preds, candidates, order):
    if order == "sequential":
        ordered = sorted(candidates)
        while ordered:
            yield ordered.pop(0)
        return
    remaining = set(candidates)
    while remaining:
        best = None
        best_deg = None
        for s in sorted(remaining):
            ins = sum(1 for p in preds[s] if p != s)
            outs = sum(1 for t in w[s] if t != s)
            deg = ins * outs
            if best_deg is None or deg < best_deg:
                best, best_deg = s, deg
        remaining.discard(best)
        yield best


def _eliminate(w, preds, s):
    loop = w[s].pop(s, None)
    if loop is not None:
        preds[s].discard(s)
        inv = RF_ONE / (RF_ONE - loop)
    else:
        inv = RF_ONE
    out = [(t, inv * wst) for t, wst in w[s].items()]
    for t, _ in out:
        preds[t].discard(s)
    for p in list(preds[s]):
        wps = w[p].pop(s)
        for t, wst in out:
            if t in w[p]:
                w[p][t] = w[p][t] + wps * wst
            else:
                w[p][t] = wps * wst
                preds[t].add(p)
    del w[s]
    preds[s] = set()
    return inv


def state_eliminate(d: PmcT, goal=None, bad=None, order="degree") -> RationalFunction:
    """Closed-form reach-avoid probability as a rational function over the
    parameters, valid at every graph-preserving well-defined valuation.

    States other than the initial one are eliminated by rerouting
    pred -> s -> succ through 1/(1 - selfloop); order is the in*out degree
    heuristic or plain ascending ids."""
    goal = d.goal if goal is None else frozenset(goal)
    bad = d.bad if bad is None else frozenset(bad)
    q = qualitative_precompute(_pmc_graph(d), goal, bad)
    if d.initial in q.s_one:
        return RF_ONE
    if d.initial in q.s_zero:
        return RF_ZERO
    U = [s for s in d.states if s not in q.s_one and s not in q.s_zero]
    w = {}
    preds = {s: set() for s in U}
    preds[_GOOD] = set()
    for s in U:
        row = {}
        for t, poly in d.row(s).items():
            if t in q.s_one:
                row[_GOOD] = row.get(_GOOD, RF_ZERO) + RationalFunction(poly)
            elif t not in q.s_zero:
                row[t] = RationalFunction(poly)
        w[s] = row
        for t in row:
            preds[t].add(s)
    for s in _pick_elimination_order(w, preds, [s for s in U if s != d.initial], order):
        _eliminate(w, preds, s)
    row = w[d.initial]
    good = row.get(_GOOD, RF_ZERO)
    loop = row.get(d.initial)
    if loop is not None:
        good = good / (RF_ONE - loop)
    return good


def state_eliminate_reward(d: PmcT, goal=None, order="degree") -> RationalFunction:
    """Closed-form expected reward until goal. Requires that every
    graph-preserving valuation reaches the goal almost surely (a property of
    the graph alone); otherwise the value is infinite everywhere and no
    rational function exists."""
    goal = d.goal if goal is None else frozenset(goal)
    graph = _pmc_graph(d)
    if d.initial in goal:
        return RF_ZERO
    q = qualitative_precompute(graph, goal, ())
    relevant = _reachable(graph, d.initial, absorbing=goal)
    if any(s not in q.s_one for s in relevant):
        raise ModelError(
            "expected reward diverges on the graph-preserving region "
            "(goal missed with positive probability)"
        )
    U = [s for s in sorted(relevant) if s not in goal]
    w = {}
    preds = {s: set() for s in U}
    rew = {}
    for s in U:
        row = {}
        for t, poly in d.row(s).items():
            if t not in goal:
                row[t] = RationalFunction(poly)
        w[s] = row
        for t in row:
            preds[t].add(s)
        r = d.rewards.get(s)
        rew[s] = RationalFunction(r) if r is not None else RF_ZERO
    for s in _pick_elimination_order(w, preds, [s for s in U if s != d.initial], order):
        loop = w[s].pop(s, None)
        if loop is not None:
            preds[s].discard(s)
            inv = RF_ONE / (RF_ONE - loop)
        else:
            inv = RF_ONE
        out = [(t, inv * wst) for t, wst in w[s].items()]
        r_s = inv * rew[s]
        for t, _ in out:
            preds[t].discard(s)
        for p in list(preds[s]):
            wps = w[p].pop(s)
            rew[p] = rew[p] + wps * r_s
            for t, wst in out:
                if t in w[p]:
                    w[p][t] = w[p][t] + wps * wst
                else:
                    w[p][t] = wps * wst
                    preds[t].add(p)
        del w[s]
    loop = w[d.initial].get(d.initial)
    result = rew[d.initial]
    if loop is not None:
        result = result / (RF_ONE - loop)
    return result


# ---------------------------------------------------------------------------
# regions and interval relaxation


class Region:
    """Axis-aligned box of parameter values, strictly inside (0, 1)."""

    def __init__(self, intervals):
        self.intervals = {}
        for name, (lo, hi) in intervals.items():
            lo = Fraction(lo)
            hi = Fraction(hi)
            if not (0 < lo <= hi < 1):
                raise ModelError(
                    "interval [%s, %s] for %s must satisfy 0 < lo <= hi < 1"
                    % (lo, hi, name)
                )
            self.intervals[name] = (lo, hi)

    def __contains__(self, name):
        return name in self.intervals

    def __eq__(self, other):
        if not isinstance(other, Region):
            return NotImplemented
        return self.intervals == other.intervals

    def __repr__(self):
        inner = ", ".join("%s:[%s,%s]" % (n, lo, hi)
                          for n, (lo, hi) in sorted(self.intervals.items()))
        return "Region(%s)" % inner

    def contains_point(self, u) -> bool:
        for name, (lo, hi) in self.intervals.items():
            if name not in u:
                return False
            v = u[name]
            if v < lo or v > hi:
                return False
        return True

    def widest(self):
        name = max(sorted(self.intervals),
                   key=lambda n: self.intervals[n][1] - self.intervals[n][0])
        return name, self.intervals[name][1] - self.intervals[name][0]

    def split(self):
        name, width = self.widest()
        if width == 0:
            raise ModelError("cannot split a point region")
        lo, hi = self.intervals[name]
        mid = (lo + hi) / 2
        left = dict(self.intervals)
        right = dict(self.intervals)
        left[name] = (lo, mid)
        right[name] = (mid, hi)
        return Region(left), Region(right)

    def sample(self, rng) -> dict:
        out = {}
        for name, (lo, hi) in sorted(self.intervals.items()):
            t = Fraction(rng.randrange(0, 10 ** 9 + 1), 10 ** 9)
            out[name] = lo + (hi - lo) * t
        return out


def _poly_interval(poly: Polynomial, intervals):
    """Exact range bound of a polynomial over the box via per-term interval
    arithmetic; exact when no variable occurs in two terms (flagged)."""
    lo = Fraction(0)
    hi = Fraction(0)
    seen = {}
    exact = True
    for mono, c in poly.terms.items():
        plo = Fraction(1)
        phi = Fraction(1)
        for name, e in mono:
            l, h = intervals[name]
            plo *= l ** e
            phi *= h ** e
            if name in seen:
                exact = False
            seen[name] = True
        if c > 0:
            lo += c * plo
            hi += c * phi
        else:
            lo += c * phi
            hi += c * plo
    return lo, hi, exact


@dataclass
class RegionBounds:
    lower: object
    upper: object
    tight: bool


def _edge_intervals(d: PmcT, region: Region):
    for name in d.params.names:
        if name not in region:
            raise ModelError("region gives no interval for parameter %r" % name)
    tight = True
    table = {}
    for s in d.states:
        entries = []
        lo_sum = Fraction(0)
        hi_sum = Fraction(0)
        for t, poly in d.row(s).items():
            lo, hi, exact = _poly_interval(poly, region.intervals)
            lo = max(lo, Fraction(0))
            hi = min(hi, Fraction(1))
            if lo > hi:
                raise ModelError(
                    "edge (%d,%d) has empty value range over the region" % (s, t))
            if not exact:
                tight = False
            entries.append((t, lo, hi))
            lo_sum += lo
            hi_sum += hi
        if lo_sum > 1 or hi_sum < 1:
            raise ModelError(
                "row of state %d cannot sum to 1 anywhere in the region" % s)
        entries.sort()
        table[s] = entries
    # decoupling across rows is the lossy step: only single-row parameters
    # keep the relaxation tight
    rows_of = {}
    for s in d.states:
        for _t, poly in d.row(s).items():
            for name in poly.variables():
                rows_of.setdefault(name, set()).add(s)
    if any(len(rs) > 1 for rs in rows_of.values()):
        tight = False
    if not d.rows_in_simple_form():
        tight = False
    return table, tight


def _greedy_allocation(entries, val_of, maximize):
    """Distribution over successors inside the per-edge intervals that
    optimizes the expected value; classic water-filling, exact."""
    alloc = {t: lo for t, lo, _hi in entries}
    remaining = Fraction(1) - sum(alloc.values())
    if maximize:
        order = sorted(entries, key=lambda e: (-val_of(e[0]), e[0]))
    else:
        order = sorted(entries, key=lambda e: (val_of(e[0]), e[0]))
    for t, lo, hi in order:
        if remaining <= 0:
            break
        take = min(hi - lo, remaining)
        alloc[t] += take
        remaining -= take
    return alloc


def _robust_prob(d, table, q, maximize):
    if d.initial in q.s_one:
        return Fraction(1)
    if d.initial in q.s_zero:
        return Fraction(0)
    U = [s for s in d.states if s not in q.s_one and s not in q.s_zero]
    idx = {s: i for i, s in enumerate(U)}
    x = {s: Fraction(0) for s in U}

    def val_of(t):
        if t in q.s_one:
            return Fraction(1)
        if t in q.s_zero:
            return Fraction(0)
        return x[t]

    alloc = {s: _greedy_allocation(table[s], val_of, maximize) for s in U}
    while True:
        rows = []
        c = []
        for s in U:
            row = {}
            acc = Fraction(0)
            for t, p in alloc[s].items():
                if p == 0:
                    continue
                if t in idx:
                    row[idx[t]] = p
                elif t in q.s_one:
                    acc += p
            rows.append(row)
            c.append(acc)
        sol = solve_exact(rows, c)
        x = {s: sol[idx[s]] for s in U}
        switched = False
        for s in U:
            cand = _greedy_allocation(table[s], val_of, maximize)
            if cand == alloc[s]:
                continue
            q_new = sum(p * val_of(t) for t, p in cand.items())
            if (maximize and q_new > x[s]) or (not maximize and q_new < x[s]):
                alloc[s] = cand
                switched = True
        if not switched:
            return x.get(d.initial, Fraction(0))


def _robust_reward(d, table, goal, maximize, region):
    graph = _pmc_graph(d)
    if d.initial in goal:
        return Fraction(0)
    q = qualitative_precompute(graph, goal, ())
    relevant = _reachable(graph, d.initial, absorbing=goal)
    if any(s not in q.s_one for s in relevant):
        return INFINITE
    U = [s for s in sorted(relevant) if s not in goal]
    idx = {s: i for i, s in enumerate(U)}
    x = {s: Fraction(0) for s in U}
    rbound = {}
    for s in U:
        poly = d.rewards.get(s)
        if poly is None:
            rbound[s] = Fraction(0)
        else:
            lo, hi, _ = _poly_interval(poly, region.intervals)
            rbound[s] = max(hi, Fraction(0)) if maximize else max(lo, Fraction(0))

    def val_of(t):
        return x[t] if t in x else Fraction(0)

    alloc = {s: _greedy_allocation(table[s], val_of, maximize) for s in U}
    while True:
        rows = []
        c = []
        for s in U:
            row = {}
            for t, p in alloc[s].items():
                if p == 0 or t not in idx:
                    continue
                row[idx[t]] = p
            rows.append(row)
            c.append(rbound[s])
        sol = solve_exact(rows, c)
        x = {s: sol[idx[s]] for s in U}
        switched = False
        for s in U:
            cand = _greedy_allocation(table[s], val_of, maximize)
            if cand == alloc[s]:
                continue
            q_new = rbound[s] + sum(p * val_of(t) for t, p in cand.items())
            if (maximize and q_new > x[s]) or (not maximize and q_new < x[s]):
                alloc[s] = cand
                switched = True
        if not switched:
            return x.get(d.initial, Fraction(0))


def region_bounds(d: PmcT, region: Region, spec: Specification) -> RegionBounds:
    """Sound lower/upper bounds on the spec value over every well-defined
    valuation inside the region.

    Parameter dependencies are relaxed per row: each row may pick any
    successor distribution inside the per-edge interval box, optimized by
    exact robust policy iteration. `tight` marks instances (simple pMC,
    single-row parameters) where the relaxation provably loses nothing."""
    table, tight = _edge_intervals(d, region)
    if spec.kind == REACH_AVOID:
        q = qualitative_precompute(_pmc_graph(d), d.goal, _spec_bad(d, spec))
        upper = _robust_prob(d, table, q, True)
        lower = _robust_prob(d, table, q, False)
    else:
        upper = _robust_reward(d, table, d.goal, True, region)
        lower = _robust_reward(d, table, d.goal, False, region)
    return RegionBounds(lower, upper, tight)


# ---------------------------------------------------------------------------
# absence proving


@dataclass
class AbsenceResult:
    no_fsc: bool
    bound: object
    regions_checked: int


def _bound_refutes(spec: Specification, lower, upper) -> bool:
    t = spec.threshold
    if spec.comparison == ">":
        return (not is_infinite(upper)) and upper <= t
    if spec.comparison == ">=":
        return (not is_infinite(upper)) and upper < t
    if spec.comparison == "<":
        return is_infinite(lower) or lower >= t
    return is_infinite(lower) or lower > t


def _dominance_bounds(d: PmcT, spec: Specification):
    """If the pMC records its source POMDP, the fully observable optimum
    bounds every controller value; fold it into the region bounds."""
    src = d.meta.get("pomdp")
    if src is None:
        return None
    key = "_mdp_bound_%s_%s" % (spec.kind, spec.opt)
    if key not in d.meta:
        d.meta[key] = mdp_optimal(src.mdp, spec).value
    return d.meta[key]


def prove_absence(d: PmcT, spec: Specification, region: Region,
                  max_depth: int = 0) -> AbsenceResult:
    """no-FSC verdict iff the sound bound already violates the threshold on
    the whole region (optionally after recursive splitting); otherwise
    inconclusive, reporting the bound that failed to refute."""
    dom = _dominance_bounds(d, spec)
    checked = 0

    def visit(reg: Region, depth: int):
        nonlocal checked
        checked += 1
        b = region_bounds(d, reg, spec)
        lower, upper = b.lower, b.upper
        if dom is not None:
            # fully observable optimum dominates every controller value
            if spec.kind == REACH_AVOID or spec.opt == "max":
                if dom < upper:
                    upper = dom
            else:
                if dom > lower:
                    lower = dom
        if _bound_refutes(spec, lower, upper):
            return True, (upper if spec.comparison in (">", ">=") else lower)
        if depth >= max_depth:
            return False, (upper if spec.comparison in (">", ">=") else lower)
        try:
            left, right = reg.split()
        except ModelError:
            return False, (upper if spec.comparison in (">", ">=") else lower)
        ok_l, b_l = visit(left, depth + 1)
        if not ok_l:
            return False, b_l
        ok_r, b_r = visit(right, depth + 1)
        if not ok_r:
            return False, b_r
        better = max if spec.comparison in (">", ">=") else min
        return True, better(b_l, b_r)

    ok, bound = visit(region, 0)
    return AbsenceResult(ok, bound, checked)


# ---------------------------------------------------------------------------
# cached evaluators


class _EvaluatorBase:
    """Shared skeleton: qualitative sets are computed once under
    graph-preserving semantics and reused; valuations that kill an edge
    fall back to a from-scratch analysis (counted in recompute_count)."""

    def __init__(self, d: PmcT, spec: Specification):
        self.d = d
        self.spec = spec
        self.recompute_count = 0
        self._count_lock = threading.Lock()
        self.edges = []
        for s in d.states:
            for t, poly in d.row(s).items():
                self.edges.append((s, t, poly))
        self.nonconst = [i for i, (_s, _t, p) in enumerate(self.edges)
                         if not p.is_constant()]
        if spec.kind == REACH_AVOID:
            self.q = qualitative_precompute(_pmc_graph(d), d.goal,
                                            _spec_bad(d, spec))
            self.trivial = None
            if d.initial in self.q.s_one:
                self.trivial = 1
            elif d.initial in self.q.s_zero:
                self.trivial = 0
            self.U = [s for s in d.states
                      if s not in self.q.s_one and s not in self.q.s_zero]
        else:
            graph = _pmc_graph(d)
            q = qualitative_precompute(graph, d.goal, ())
            relevant = _reachable(graph, d.initial, absorbing=d.goal)
            self.diverges = any(s not in q.s_one for s in relevant)
            self.trivial = 0 if d.initial in d.goal else None
            self.U = [s for s in sorted(relevant) if s not in d.goal]
        self.idx = {s: i for i, s in enumerate(self.U)}

    def _fresh(self, u: Instantiation):
        # counter shared across worker threads
        with self._count_lock:
            self.recompute_count += 1
        res = apply_instantiation(self.d, u)
        if not res.well_defined:
            raise ModelError("instantiation is not well-defined: "
                             + "; ".join(res.defects[:4]))
        return check_mc(res.model, self.spec)


class ExactPmcEvaluator(_EvaluatorBase):
    """Exact values at rational instantiations, with the qualitative
    precomputation cached across calls."""

    def evaluate(self, u):
        if not isinstance(u, Instantiation):
            u = Instantiation(u)
        if not u.is_rational:
            raise ModelError("exact evaluation needs a rational instantiation")
        vals = {}
        boundary = False
        for i, (s, t, poly) in enumerate(self.edges):
            v = poly.evaluate(u.values) if not poly.is_constant() else poly.constant_value()
            if v < 0 or v > 1:
                raise ModelError(
                    "instantiation is not well-defined: entry (%d,%d) = %s" % (s, t, v))
            if v == 0 and not poly.is_constant():
                boundary = True
            vals[(s, t)] = v
        sums = {}
        for (s, _t), v in vals.items():
            sums[s] = sums.get(s, Fraction(0)) + v
        for s, total in sums.items():
            if total != 1:
                raise ModelError(
                    "instantiation is not well-defined: row %d sums to %s" % (s, total))
        if boundary:
            return self._fresh(u)
        if self.spec.kind == REACH_AVOID:
            if self.trivial is not None:
                return Fraction(self.trivial)
            rows = []
            c = []
            for s in self.U:
                row = {}
                acc = Fraction(0)
                for t in self.d.row(s):
                    v = vals[(s, t)]
                    if t in self.idx:
                        row[self.idx[t]] = v
                    elif t in self.q.s_one:
                        acc += v
                rows.append(row)
                c.append(acc)
            return solve_exact(rows, c)[self.idx[self.d.initial]]
        if self.diverges:
            return INFINITE
        if self.trivial is not None:
            return Fraction(self.trivial)
        rows = []
        c = []
        for s in self.U:
            row = {}
            for t in self.d.row(s):
                if t in self.idx:
                    row[self.idx[t]] = vals[(s, t)]
            rows.append(row)
            r = self.d.rewards.get(s)
            c.append(r.evaluate(u.values) if r is not None else Fraction(0))
        return solve_exact(rows, c)[self.idx[self.d.initial]]


class FloatPmcEvaluator(_EvaluatorBase):
    """Fast float values for search loops: compiled term-table edge
    evaluation plus a dense solve on the cached uncertain-state system.
    The caller guarantees well-definedness (the swarm parameterization
    does); boundary valuations take the counted slow path."""

    def __init__(self, d: PmcT, spec: Specification):
        super().__init__(d, spec)
        self.param_order = list(d.params.names)
        pidx = {n: i for i, n in enumerate(self.param_order)}
        self.table = TermTable([p for (_s, _t, p) in self.edges], pidx)
        self.nonconst_idx = np.asarray(self.nonconst, dtype=np.intp)
        # system skeleton over U
        a_rows, a_cols, a_edges = [], [], []
        c_rows, c_edges = [], []
        edge_pos = {(s, t): i for i, (s, t, _p) in enumerate(self.edges)}
        for s in self.U:
            for t in self.d.row(s):
                e = edge_pos[(s, t)]
                if t in self.idx:
                    a_rows.append(self.idx[s])
                    a_cols.append(self.idx[t])
                    a_edges.append(e)
                elif self.spec.kind == REACH_AVOID and t in self.q.s_one:
                    c_rows.append(self.idx[s])
                    c_edges.append(e)
        self.a_rows = np.asarray(a_rows, dtype=np.intp)
        self.a_cols = np.asarray(a_cols, dtype=np.intp)
        self.a_edges = np.asarray(a_edges, dtype=np.intp)
        self.c_rows = np.asarray(c_rows, dtype=np.intp)
        self.c_edges = np.asarray(c_edges, dtype=np.intp)
        if self.spec.kind == EXPECTED_REWARD:
            polys = [self.d.rewards.get(s, Polynomial()) for s in self.U]
            self.reward_table = TermTable(polys, pidx)

    def evaluate(self, u):
        if not isinstance(u, Instantiation):
            u = Instantiation(u)
        x = np.empty(len(self.param_order))
        for i, name in enumerate(self.param_order):
            x[i] = float(u[name])
        return self.evaluate_vector(x, u)

    def evaluate_vector(self, x, u=None) -> float:
        vals = self.table.evaluate(x)
        if self.nonconst_idx.size and np.any(vals[self.nonconst_idx] <= 0.0):
            if u is None:
                u = Instantiation({n: float(v) for n, v in zip(self.param_order, x)})
            return float(self._fresh(u))
        if self.spec.kind == EXPECTED_REWARD and self.diverges:
            return math.inf
        if self.trivial is not None:
            return float(self.trivial)
        n = len(self.U)
        A = np.zeros((n, n))
        A[self.a_rows, self.a_cols] = vals[self.a_edges]
        if self.spec.kind == REACH_AVOID:
            c = np.zeros(n)
            np.add.at(c, self.c_rows, vals[self.c_edges])
        else:
            c = self.reward_table.evaluate(x)
        sol = np.linalg.solve(np.eye(n) - A, c)
        return float(sol[self.idx[self.d.initial]])
