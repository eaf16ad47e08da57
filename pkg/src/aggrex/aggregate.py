"""Selecting a budgeted set of local explainers by exact integer programming.

The model, over binary families w (candidate selected), y (point covered)
and z (candidate claims point, only inside the candidate's ball):

    max sum_j y_j
    s.t. z_ij <= w_i                     (one per z variable)
         y_j >= z_ij                     (one per z variable)
         y_j <= sum_i z_ij               (per point)
         sum_j (agree_ij - phi) z_ij >= 0  (per candidate: fidelity floor)
         sum_i w_i <= K                  (budget)

Out-of-ball z variables are presolved away (fixed to zero); they appear as
comments in the exported LP for auditability.

Two coverage numbers coexist: ip_coverage counts the points actually
claimed through z (a solver may drop in-ball points to satisfy a fidelity
row), while ball_coverage counts every point inside any selected ball.
ball_coverage >= ip_coverage always; both are reported.

Fidelity-floor arithmetic is exact: phi is quantized to a rational with
denominator 10^6 and every feasibility check runs on integers, so e.g.
9 agreeing + 1 disagreeing claims at phi = 0.9 is feasible, not a float
rounding accident.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .data import Dataset
from .sampler import within_ball

PHI_DENOM = 10**6
INNER_EXHAUSTIVE_LIMIT = 20
METRIC_DESCRIPTOR = "max(Linf over continuous, L1 over binary)"


class BruteForceRefused(ValueError):
    """Instance exceeds the brute-force enumeration limits."""


def _phi_to_rational(phi: float) -> tuple[int, int]:
    if not 0.0 <= phi <= 1.0:
        raise ValueError("fidelity floor must lie in [0, 1]")
    return int(round(phi * PHI_DENOM)), PHI_DENOM


def _iter_bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass
class CandidatePool:
    """Pairwise ball membership and surrogate/black-box agreement for all candidates."""

    radii: np.ndarray
    within: np.ndarray
    agree: np.ndarray
    metric: str = METRIC_DESCRIPTOR

    @property
    def n(self) -> int:
        return self.within.shape[0]

    def ball_masks(self) -> list[int]:
        return [int(sum(1 << j for j in range(self.n) if self.within[i, j])) for i in range(self.n)]

    def agree_masks(self) -> list[int]:
        return [int(sum(1 << j for j in range(self.n) if self.agree[i, j])) for i in range(self.n)]

    def disagree_pair_count(self) -> int:
        return int(np.sum(self.within & ~self.agree))


def build_pool(dataset: Dataset, explainers, blackbox) -> CandidatePool:
    """One candidate per dataset point, in dataset order.

    within[i][j] tests the mixed-metric ball of radius radii[i] around
    point i; agree[i][j] compares explainer i and the black box at point j.
    """
    n = dataset.n
    if len(explainers) != n:
        raise ValueError(f"need one explainer per dataset point ({n}), got {len(explainers)}")
    for i, ex in enumerate(explainers):
        if ex.center_index != i:
            raise ValueError(f"explainer {i} has center_index {ex.center_index}")
        if ex.center.shape != (dataset.m,):
            raise ValueError("explainer center does not match the dataset schema")
    radii = np.array([ex.radius for ex in explainers], dtype=float)
    within = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            within[i, j] = within_ball(dataset.X[j], dataset.X[i], radii[i], dataset.schema)
    f_labels = blackbox.predict_batch(dataset.X)
    agree = np.zeros((n, n), dtype=bool)
    for i, ex in enumerate(explainers):
        agree[i, :] = ex.predict_batch(dataset.X) == f_labels
    within.setflags(write=False)
    agree.setflags(write=False)
    return CandidatePool(radii=radii, within=within, agree=agree)


@dataclass
class IPModel:
    n: int
    budget: int
    fidelity_floor: float
    phi_num: int
    phi_den: int
    z_support: tuple[tuple[int, int], ...]
    agree: np.ndarray

    def variable_count(self) -> int:
        return 2 * self.n + len(self.z_support)

    def constraint_count(self) -> int:
        return 2 * len(self.z_support) + 2 * self.n + 1


def build_ip(pool: CandidatePool, budget: int, fidelity_floor: float) -> IPModel:
    """Materialize the integer program with out-of-ball z variables presolved away."""
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    phi_num, phi_den = _phi_to_rational(fidelity_floor)
    support = tuple(
        (i, j) for i in range(pool.n) for j in range(pool.n) if pool.within[i, j]
    )
    return IPModel(
        n=pool.n,
        budget=int(budget),
        fidelity_floor=float(fidelity_floor),
        phi_num=phi_num,
        phi_den=phi_den,
        z_support=support,
        agree=pool.agree,
    )


@dataclass
class AggregateSolution:
    selected: tuple[int, ...]
    z_assignment: dict[int, tuple[int, ...]]
    ip_coverage: int
    ball_coverage: int
    ball_min_fidelity: float | None
    claimed_min_fidelity: float | None
    status: str
    nodes_explored: int = 0
    wall_time_ms: float = 0.0

    def to_dict(self) -> dict:
        return {
            "selected": list(self.selected),
            "z_assignment": {str(i): list(js) for i, js in sorted(self.z_assignment.items())},
            "ip_coverage": self.ip_coverage,
            "ball_coverage": self.ball_coverage,
            "ball_min_fidelity": self.ball_min_fidelity,
            "claimed_min_fidelity": self.claimed_min_fidelity,
            "status": self.status,
            "nodes_explored": self.nodes_explored,
            "wall_time_ms": self.wall_time_ms,
        }


def coverage(sol: AggregateSolution, pool: CandidatePool) -> int:
    """Points inside at least one selected candidate's full ball (union count)."""
    if not sol.selected:
        return 0
    mask = np.zeros(pool.n, dtype=bool)
    for i in sol.selected:
        mask |= pool.within[i]
    return int(np.sum(mask))


def fidelity(sol: AggregateSolution, pool: CandidatePool) -> float:
    """Minimum over selected candidates of in-ball agreement fraction.

    A selected candidate with an empty ball contributes 1 vacuously (the
    ratio's denominator would be 0 otherwise).
    """
    if not sol.selected:
        raise ValueError("fidelity undefined for empty aggregate")
    worst = 1.0
    for i in sol.selected:
        ball = pool.within[i]
        size = int(np.sum(ball))
        if size == 0:
            continue
        worst = min(worst, float(np.sum(pool.agree[i] & ball)) / size)
    return worst


# -- inner claim problem ------------------------------------------------------

def _claims_for_selection(
    selected: tuple[int, ...],
    ball: list[int],
    agree: list[int],
    phi_num: int,
    phi_den: int,
    inner_limit: int,
):
    """Best z claims for a fixed selection: (z masks, covered mask, objective, exact?).

    Agreeing in-ball points are always claimed (each adds 1 - phi >= 0 of
    slack and can only help). Disagreeing in-ball points each cost phi of
    slack, so candidate i can absorb at most
    floor(n_agree_i * (1 - phi) / phi) of them; uncovered disagreeing
    points are then assigned to candidates by exhaustive search when the
    total disagreeing-pair count is within inner_limit, else by a greedy
    that is not optimality-certified.
    """
    if not selected:
        return {}, 0, 0, True
    if phi_num == 0:
        z = {i: ball[i] for i in selected}
        covered = 0
        for i in selected:
            covered |= ball[i]
        return z, covered, covered.bit_count(), True

    z = {i: ball[i] & agree[i] for i in selected}
    covered = 0
    for i in selected:
        covered |= z[i]
    slack_units = {i: z[i].bit_count() * (phi_den - phi_num) for i in selected}
    caps = {i: slack_units[i] // phi_num for i in selected}

    pair_count = sum((ball[i] & ~agree[i]).bit_count() for i in selected)
    open_points: list[tuple[int, list[int]]] = []
    candidate_mask = 0
    for i in selected:
        candidate_mask |= ball[i] & ~agree[i]
    for j in _iter_bits(candidate_mask & ~covered):
        eligible = [i for i in selected if (ball[i] >> j) & 1 and not (agree[i] >> j) & 1 and caps[i] > 0]
        if eligible:
            open_points.append((j, eligible))

    if not open_points:
        return z, covered, covered.bit_count(), True

    if pair_count <= inner_limit:
        assignment = _assign_exhaustive(open_points, caps)
        exact = True
    else:
        assignment = _assign_greedy(open_points, caps)
        exact = False
    for j, i in assignment.items():
        z[i] |= 1 << j
        covered |= 1 << j
    return z, covered, covered.bit_count(), exact


def _assign_exhaustive(open_points, caps) -> dict[int, int]:
    """Max-cardinality point->candidate assignment under capacities, by pruned DFS."""
    best_count = -1
    best: dict[int, int] = {}
    remaining = dict(caps)
    current: dict[int, int] = {}

    def dfs(k: int) -> None:
        nonlocal best_count, best
        if len(current) + (len(open_points) - k) <= best_count:
            return
        if k == len(open_points):
            if len(current) > best_count:
                best_count = len(current)
                best = dict(current)
            return
        j, eligible = open_points[k]
        for i in eligible:
            if remaining[i] > 0:
                remaining[i] -= 1
                current[j] = i
                dfs(k + 1)
                del current[j]
                remaining[i] += 1
        dfs(k + 1)

    dfs(0)
    return best


def _assign_greedy(open_points, caps) -> dict[int, int]:
    """Points in index order, each to the eligible candidate with most remaining slack."""
    remaining = dict(caps)
    out: dict[int, int] = {}
    for j, eligible in open_points:
        pick = None
        for i in eligible:
            if remaining[i] > 0 and (pick is None or remaining[i] > remaining[pick]):
                pick = i
        if pick is not None:
            remaining[pick] -= 1
            out[j] = pick
    return out


def _finish_solution(selected, z_masks, obj, status, pool, nodes, t0) -> AggregateSolution:
    z_assignment = {int(i): tuple(_iter_bits(m)) for i, m in z_masks.items() if m}
    sol = AggregateSolution(
        selected=tuple(int(i) for i in selected),
        z_assignment=z_assignment,
        ip_coverage=int(obj),
        ball_coverage=0,
        ball_min_fidelity=None,
        claimed_min_fidelity=None,
        status=status,
        nodes_explored=nodes,
        wall_time_ms=(time.perf_counter() - t0) * 1000.0,
    )
    sol.ball_coverage = coverage(sol, pool)
    if sol.selected:
        sol.ball_min_fidelity = fidelity(sol, pool)
        worst = 1.0
        for i in sol.selected:
            js = sol.z_assignment.get(i, ())
            if js:
                worst = min(worst, sum(1 for j in js if pool.agree[i, j]) / len(js))
        sol.claimed_min_fidelity = worst
    return sol


def solve_exact(model: IPModel, pool: CandidatePool, inner_limit: int = INNER_EXHAUSTIVE_LIMIT) -> AggregateSolution:
    """Provably optimal solution by branch-and-bound on the selection variables.

    Depth-first binary branching, 1-branch before 0-branch, over candidates
    in a deterministic static preorder (descending claimable-set size, ties
    by index): big candidates first makes incumbents and bounds bite early.
    The node bound works on claimable sets (an agreeing in-ball point is
    always claimable; disagreeing ones only when the candidate's fidelity
    row has any slack to spend): fixed-in candidates contribute the union
    of their claimable sets, remaining ones the cheaper of (sum of the
    largest capped gains, size of the still-reachable claimable point set).
    Everything over-counts the true claims, so pruning is safe.
    Warm-started with the greedy solution. Status degrades from optimal to
    feasible only when some evaluated leaf exceeded the exhaustive inner
    claim limit.
    """
    t0 = time.perf_counter()
    if model.n != pool.n:
        raise ValueError("model and pool disagree on candidate count")
    n, budget = model.n, model.budget
    if budget == 0:
        return _finish_solution((), {}, 0, "optimal", pool, 1, t0)
    ball = pool.ball_masks()
    agree = pool.agree_masks()
    phi_num, phi_den = model.phi_num, model.phi_den

    # claimable set and per-candidate claim cap under the fidelity row
    claimable = [0] * n
    max_claim = [0] * n
    for i in range(n):
        sure = ball[i] & agree[i]
        n_sure = sure.bit_count()
        if phi_num == 0:
            cap = n
        else:
            cap = (n_sure * (phi_den - phi_num)) // phi_num
        claimable[i] = sure | (ball[i] & ~agree[i] if cap > 0 else 0)
        max_claim[i] = min(claimable[i].bit_count(), n_sure + cap)

    order = sorted(range(n), key=lambda i: (-max_claim[i], i))
    claim_o = [claimable[i] for i in order]
    cap_o = [max_claim[i] for i in order]
    suffix_reach = [0] * (n + 1)
    for k in range(n - 1, -1, -1):
        suffix_reach[k] = suffix_reach[k + 1] | claim_o[k]

    warm = solve_greedy(pool, budget, model.fidelity_floor, inner_limit=inner_limit)
    best_obj = warm.ip_coverage
    best_selected = warm.selected
    best_z = {i: 0 for i in warm.selected}
    for i, js in warm.z_assignment.items():
        best_z[i] = sum(1 << j for j in js)

    nodes = 0
    all_leaves_exact = True
    # frames: (next position in preorder, union of fixed claimables,
    #          selected count, selection as a parent-linked chain)
    stack = [(0, 0, 0, None)]
    while stack:
        next_k, covered, count, chain = stack.pop()
        nodes += 1
        if count == budget or next_k == n:
            selected = []
            node = chain
            while node is not None:
                selected.append(node[0])
                node = node[1]
            selected = tuple(sorted(selected))
            z, _, obj, exact = _claims_for_selection(selected, ball, agree, phi_num, phi_den, inner_limit)
            if not exact:
                all_leaves_exact = False
            if obj > best_obj:
                best_obj = obj
                best_selected = selected
                best_z = z
            continue
        base = covered.bit_count()
        reach = (suffix_reach[next_k] & ~covered).bit_count()
        if base + reach <= best_obj:
            continue
        q = budget - count
        gains = []
        for k in range(next_k, n):
            g = (claim_o[k] & ~covered).bit_count()
            cap = cap_o[k]
            gains.append(g if g < cap else cap)
        gains.sort(reverse=True)
        if base + min(sum(gains[:q]), reach) <= best_obj:
            continue
        # LIFO: push the 0-branch first so the 1-branch is explored first
        stack.append((next_k + 1, covered, count, chain))
        stack.append((next_k + 1, covered | claim_o[next_k], count + 1, (order[next_k], chain)))

    status = "optimal" if all_leaves_exact else "feasible"
    return _finish_solution(best_selected, best_z, best_obj, status, pool, nodes, t0)


def solve_greedy(
    pool: CandidatePool,
    budget: int,
    fidelity_floor: float,
    inner_limit: int = INNER_EXHAUSTIVE_LIMIT,
) -> AggregateSolution:
    """Iteratively add the candidate with the largest claimable-coverage gain."""
    t0 = time.perf_counter()
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    phi_num, phi_den = _phi_to_rational(fidelity_floor)
    n = pool.n
    ball = pool.ball_masks()
    agree = pool.agree_masks()
    selected: tuple[int, ...] = ()
    current_obj = 0
    evals = 0
    while len(selected) < budget:
        best_gain = 0
        best_i = None
        for i in range(n):
            if i in selected:
                continue
            trial = tuple(sorted(selected + (i,)))
            _, _, obj, _ = _claims_for_selection(trial, ball, agree, phi_num, phi_den, inner_limit)
            evals += 1
            if obj - current_obj > best_gain:  # strict: ties keep the lowest index
                best_gain = obj - current_obj
                best_i = i
        if best_i is None:
            break
        selected = tuple(sorted(selected + (best_i,)))
        current_obj += best_gain
    z, _, obj, _ = _claims_for_selection(selected, ball, agree, phi_num, phi_den, inner_limit)
    return _finish_solution(selected, z, obj, "feasible", pool, evals, t0)


def brute_force(pool: CandidatePool, budget: int, fidelity_floor: float) -> AggregateSolution:
    """Exhaustive oracle: every selection of size <= budget, every admissible claim set.

    On top of always claiming agreeing in-ball points (which never hurts a
    fidelity row and never lowers the objective), it enumerates all subsets
    of disagreeing (candidate, point) pairs and checks each fidelity row by
    direct integer evaluation. Refuses instances with n > 12 or more than
    20 disagreeing in-ball pairs.
    """
    t0 = time.perf_counter()
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    if pool.n > 12:
        raise BruteForceRefused(f"n = {pool.n} exceeds the brute-force limit of 12")
    total_pairs = pool.disagree_pair_count()
    if total_pairs > 20:
        raise BruteForceRefused(f"{total_pairs} disagreeing in-ball pairs exceed the limit of 20")
    phi_num, phi_den = _phi_to_rational(fidelity_floor)
    n = pool.n
    ball = pool.ball_masks()
    agree = pool.agree_masks()

    best_obj = -1
    best_selected: tuple[int, ...] = ()
    best_z: dict[int, int] = {}
    checked = 0
    for k in range(min(budget, n) + 1):
        for sel in combinations(range(n), k):
            base = {i: ball[i] & agree[i] for i in sel}
            base_covered = 0
            for i in sel:
                base_covered |= base[i]
            slack = {i: base[i].bit_count() * (phi_den - phi_num) for i in sel}
            pairs = [(i, j) for i in sel for j in _iter_bits(ball[i] & ~agree[i])]
            for mask in range(1 << len(pairs)):
                checked += 1
                cost: dict[int, int] = {}
                extra = 0
                for t, (i, j) in enumerate(pairs):
                    if (mask >> t) & 1:
                        cost[i] = cost.get(i, 0) + phi_num
                        extra |= 1 << j
                if any(cost.get(i, 0) > slack[i] for i in sel):
                    continue
                obj = (base_covered | extra).bit_count()
                if obj > best_obj:
                    best_obj = obj
                    best_selected = sel
                    best_z = dict(base)
                    for t, (i, j) in enumerate(pairs):
                        if (mask >> t) & 1:
                            best_z[i] |= 1 << j
    return _finish_solution(best_selected, best_z, best_obj, "optimal", pool, checked, t0)


def verify_solution(
    pool: CandidatePool,
    budget: int,
    fidelity_floor: float,
    sol: AggregateSolution,
) -> list[str]:
    """Re-check every IP constraint family from raw pool data; returns violations."""
    phi_num, phi_den = _phi_to_rational(fidelity_floor)
    violations: list[str] = []
    selected = set(sol.selected)
    if len(selected) != len(sol.selected):
        violations.append("selected contains duplicates")
    if len(selected) > budget:
        violations.append(f"budget violated: {len(selected)} > {budget}")
    for i in sol.z_assignment:
        if i not in selected:
            violations.append(f"z for unselected candidate {i} (z <= w violated)")
    covered: set[int] = set()
    for i, js in sol.z_assignment.items():
        if len(set(js)) != len(js):
            violations.append(f"candidate {i} claims a point twice")
        for j in js:
            if not (0 <= j < pool.n):
                violations.append(f"claimed point {j} out of range")
            elif not pool.within[i, j]:
                violations.append(f"radius row violated: point {j} outside ball of candidate {i}")
        covered.update(js)
    if len(covered) != sol.ip_coverage:
        violations.append(
            f"coverage linking violated: |union z| = {len(covered)} but ip_coverage = {sol.ip_coverage}"
        )
    for i in range(pool.n):
        js = sol.z_assignment.get(i, ())
        row = sum((phi_den if pool.agree[i, j] else 0) - phi_num for j in js)
        if row < 0:
            violations.append(f"fidelity row violated for candidate {i}: slack {row}/{phi_den}")
    return violations


# -- LP text format -----------------------------------------------------------

def _coef(value: float) -> str:
    return f"{value:.12g}"


def export_lp(model: IPModel, path) -> None:
    """Write the model in LP text format (Maximize / Subject To / Binary)."""
    support = model.z_support
    in_ball: dict[int, list[int]] = {j: [] for j in range(model.n)}
    for i, j in support:
        in_ball[j].append(i)
    lines: list[str] = []
    lines.append("\\ coverage-maximization integer program")
    lines.append(f"\\ budget K = {model.budget}, fidelity floor = {_coef(model.fidelity_floor)}")
    lines.append("\\ radius rows presolved: z variables exist only inside candidate balls;")
    lines.append("\\ all other z_i_j are fixed to 0:")
    support_set = set(support)
    fixed = [
        f"z_{i}_{j}" for i in range(model.n) for j in range(model.n) if (i, j) not in support_set
    ]
    if fixed:
        for start in range(0, len(fixed), 12):
            lines.append("\\   " + " ".join(fixed[start : start + 12]) + " = 0")
    else:
        lines.append("\\   (none)")
    lines.append("Maximize")
    lines.append(" obj: " + " + ".join(f"y_{j}" for j in range(model.n)))
    lines.append("Subject To")
    for i, j in support:
        lines.append(f" zw_{i}_{j}: z_{i}_{j} - w_{i} <= 0")
    for i, j in support:
        lines.append(f" yz_{i}_{j}: y_{j} - z_{i}_{j} >= 0")
    for j in range(model.n):
        terms = "".join(f" - z_{i}_{j}" for i in in_ball[j])
        lines.append(f" cov_{j}: y_{j}{terms} <= 0")
    phi = model.phi_num / model.phi_den
    for i in range(model.n):
        parts: list[str] = []
        for ii, j in support:
            if ii != i:
                continue
            c = (1.0 if model.agree[i, j] else 0.0) - phi
            if not parts:
                parts.append(f"{_coef(c)} z_{i}_{j}")
            elif c < 0:
                parts.append(f"- {_coef(-c)} z_{i}_{j}")
            else:
                parts.append(f"+ {_coef(c)} z_{i}_{j}")
        lines.append(f" fid_{i}: " + " ".join(parts) + " >= 0")
    lines.append(" budget: " + " + ".join(f"w_{i}" for i in range(model.n)) + f" <= {model.budget}")
    lines.append("Binary")
    names = (
        [f"w_{i}" for i in range(model.n)]
        + [f"y_{j}" for j in range(model.n)]
        + [f"z_{i}_{j}" for i, j in support]
    )
    for start in range(0, len(names), 10):
        lines.append(" " + " ".join(names[start : start + 10]))
    lines.append("End")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_lp(path) -> dict:
    """Structural re-parse of an exported LP: variable and constraint counts."""
    section = None
    constraint_lines = 0
    binary_vars: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("\\"):
                continue
            lowered = line.lower()
            if lowered == "maximize" or lowered == "minimize":
                section = "objective"
                continue
            if lowered == "subject to":
                section = "constraints"
                continue
            if lowered == "bounds":
                section = "bounds"
                continue
            if lowered == "binary":
                section = "binary"
                continue
            if lowered == "end":
                break
            if section == "constraints" and ":" in line:
                constraint_lines += 1
            elif section == "binary":
                binary_vars.extend(line.split())
    return {
        "n_constraints": constraint_lines,
        "n_variables": len(binary_vars),
        "binary_variables": binary_vars,
    }
