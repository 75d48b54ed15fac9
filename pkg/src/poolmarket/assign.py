"""Bundle enumeration and exact assignment for fleet re-optimization.

The pipeline has three stages: guided enumeration of vehicle/bundle
options (a reachability filter, a pairwise shareability filter, then
level-by-level bundle growth where every sub-bundle must already be
feasible), exact minimization over the resulting options by LP-based
branch and bound, and application of the chosen schedules to the fleet.

Current schedules are always injected as a starting solution, so the
optimized total can never exceed the pre-optimization total.

A brute-force reference (the oracle_* functions) lives alongside for
tests; it shares only the network query layer with the production path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations

from scipy.optimize import linprog

from .network import Network, NoPathError
from .operators import (
    ConsistencyError,
    Constraints,
    ObjectiveParams,
    Schedule,
    StopSpec,
    Vehicle,
    check_feasibility,
    plan_stop_sequence,
    resume_point,
    schedule_cost,
)

# numeric safety slack when pruning on LP bounds; candidate values are
# always recomputed exactly, so a loose slack only costs extra nodes
_PRUNE_SLACK = 0.1
_INT_TOL = 1e-6
_TIE_TOL = 1e-9


class InfeasibleAssignmentError(RuntimeError):
    """No combination of bundles covers every booked request."""


@dataclass
class V2RB:
    """One assignable option: a vehicle together with a request bundle.

    The bundle always includes the customers already on the vehicle.
    ``grade`` counts the waiting (not yet picked up) requests in the
    bundle.  ``grandfathered`` marks an option carried over from the
    current plan even though it no longer passes every check, which can
    happen after travel times change; such schedules keep their booking
    but are not re-validated on apply.
    """

    vehicle_id: int
    bundle: frozenset
    cost: float
    schedule: Schedule | None
    grade: int
    grandfathered: bool = False

    def key(self):
        return (self.vehicle_id, tuple(sorted(self.bundle)))


# -- shareability filters ------------------------------------------------


def _reachable(network: Network, vehicle: Vehicle, request, constraints: Constraints,
               now: float, min_fac: float) -> bool:
    # lower bound on the earliest possible pickup; never rejects a
    # vehicle that some schedule could actually send
    node, t_ready = resume_point(vehicle, network, now)
    earliest = t_ready + network.base_travel_time(node, request.origin) * min_fac
    return earliest <= request.t_req_s + constraints.max_wait_s + 1e-9


_PAIR_ORDERS = (
    (0, 1, 2, 3), (0, 2, 1, 3), (0, 2, 3, 1),
    (2, 0, 1, 3), (2, 0, 3, 1), (2, 3, 0, 1),
)


def pair_shareable(network: Network, ra, rb, constraints: Constraints,
                   min_fac: float | None = None) -> bool:
    """Could one vehicle serve both requests, start position free?

    Each stop interleaving is checked as a difference-constraint system:
    stop times may include waiting, legs take at least the direct travel
    time at the smallest profile factor, pickups sit inside their wait
    window, and each ride stays inside its detour allowance.  The check
    relaxes every real schedule, so a pair that any vehicle could serve
    together is never rejected.
    """
    if min_fac is None:
        min_fac = network.min_factor()
    # atoms: 0 board ra, 1 alight ra, 2 board rb, 3 alight rb
    atom_node = (ra.origin, ra.destination, rb.origin, rb.destination)
    windows = {0: ra, 2: rb}
    limit_a = (1.0 + constraints.max_detour_rel) * ra.direct_time_s
    limit_b = (1.0 + constraints.max_detour_rel) * rb.direct_time_s
    dwell = constraints.dwell_s
    for order in _PAIR_ORDERS:
        pos = {atom: i for i, atom in enumerate(order)}
        edges = []
        ok = True
        for i in range(1, 4):
            n_prev, n_here = atom_node[order[i - 1]], atom_node[order[i]]
            try:
                sep = network.base_travel_time(n_prev, n_here) * min_fac
            except NoPathError:
                ok = False
                break
            if n_prev != n_here:
                sep += dwell
            edges.append((i, i - 1, -sep))   # t[i] - t[i-1] >= sep
        if not ok:
            continue
        for atom, req in windows.items():
            i = pos[atom]
            edges.append((4, i, req.t_req_s + constraints.max_wait_s))
            edges.append((i, 4, -req.t_req_s))
        edges.append((pos[0], pos[1], limit_a))
        edges.append((pos[2], pos[3], limit_b))
        if _difference_system_feasible(5, edges):
            return True
    return False


def _difference_system_feasible(n: int, edges, tol: float = 1e-9) -> bool:
    # Bellman-Ford negative-cycle test; dist starts at 0 everywhere,
    # which is equivalent to a virtual source into every node
    dist = [0.0] * n
    for _ in range(n - 1):
        changed = False
        for u, v, w in edges:
            if dist[u] + w < dist[v] - tol:
                dist[v] = dist[u] + w
                changed = True
        if not changed:
            return True
    for u, v, w in edges:
        if dist[u] + w < dist[v] - tol:
            return False
    return True


# -- best schedule for one bundle ----------------------------------------


def _best_bundle_order(network: Network, vehicle: Vehicle, add_ids, requests,
                       pickup_times, constraints: Constraints,
                       objective: ObjectiveParams, now: float):
    """Cheapest feasible stop order serving onboard plus ``add_ids``.

    Depth-first over pickup-before-dropoff orders with deadline,
    capacity and cost-bound pruning.  Legs are timed exactly like the
    production scheduler, so the returned schedule's cost is the one the
    rest of the system will see.  Returns (cost, schedule) or None.
    """
    node0, t0 = resume_point(vehicle, network, now)
    cap = constraints.capacity
    dwell = constraints.dwell_s
    dw = objective.dist_weight
    tw = objective.time_weight
    bundle = sorted(set(vehicle.onboard) | set(add_ids))
    reward_term = objective.assignment_reward * len(bundle)
    items = tuple(sorted(
        [(rid, 0) for rid in add_ids] + [(rid, 1) for rid in bundle]))
    board_deadline = {rid: requests[rid].t_req_s + constraints.max_wait_s
                      for rid in add_ids}
    ride_limit = {rid: (1.0 + constraints.max_detour_rel) * requests[rid].direct_time_s
                  for rid in bundle}
    t_req = {rid: requests[rid].t_req_s for rid in bundle}
    origin = {rid: requests[rid].origin for rid in bundle}
    dest = {rid: requests[rid].destination for rid in bundle}

    best_cost = None
    best_order = None
    arr: dict = {}
    planned: dict = {}
    order: list = []

    def rec(node, t, dist, delay, count, onboard, remaining):
        nonlocal best_cost, best_order
        if not remaining:
            d2 = 0.0
            for rid in bundle:
                d2 += arr[rid] - t_req[rid]
            cost = dw * dist + tw * d2 - reward_term
            if best_cost is None or cost < best_cost:
                best_cost = cost
                best_order = list(order)
            return
        for rid, kind in remaining:
            if kind == 0 and t > board_deadline[rid]:
                return      # that pickup can never happen now
        for i, (rid, kind) in enumerate(remaining):
            if kind == 0:
                if count >= cap:
                    continue
                nxt = origin[rid]
            else:
                if rid not in onboard:
                    continue
                nxt = dest[rid]
            if nxt != node:
                t2 = t + network.travel_time(node, nxt, t)
                dist2 = dist + network.distance(node, nxt)
            else:
                t2, dist2 = t, dist
            if kind == 0:
                if t2 > board_deadline[rid]:
                    continue
                delay2 = delay
            else:
                picked = pickup_times.get(rid, planned.get(rid))
                if picked is None or t2 - picked > ride_limit[rid]:
                    continue
                delay2 = delay + (t2 - t_req[rid])
            bound = dw * dist2 + tw * delay2 - reward_term
            if best_cost is not None and bound >= best_cost + 1e-9:
                continue
            if kind == 0:
                onboard.add(rid)
                planned[rid] = t2
            else:
                onboard.discard(rid)
                arr[rid] = t2
            order.append((rid, kind))
            rec(nxt, t2 + dwell, dist2, delay2,
                count + (1 if kind == 0 else -1), onboard,
                remaining[:i] + remaining[i + 1:])
            order.pop()
            if kind == 0:
                onboard.discard(rid)
                del planned[rid]
            else:
                onboard.add(rid)
                del arr[rid]

    rec(node0, t0, 0.0, 0.0, len(vehicle.onboard), set(vehicle.onboard), items)
    if best_order is None:
        return None
    specs = []
    for rid, kind in best_order:
        if kind == 0:
            specs.append(StopSpec(origin[rid], board=(rid,)))
        else:
            specs.append(StopSpec(dest[rid], alight=(rid,)))
    sched, violation = plan_stop_sequence(
        network, vehicle, specs, now, requests, pickup_times, constraints)
    if violation is not None:
        raise ConsistencyError(
            f"bundle search produced an infeasible order: {violation}")
    cost = schedule_cost(sched, objective, t_req)
    return cost, sched


# -- guided enumeration --------------------------------------------------


def _restricted_specs(specs, keep_ids):
    out = []
    for s in specs:
        b = tuple(r for r in s.board if r in keep_ids)
        a = tuple(r for r in s.alight if r in keep_ids)
        if b or a:
            out.append(StopSpec(s.node, b, a))
    return out


def enumerate_v2rbs(network: Network, vehicles, requests, candidate_ids,
                    constraints: Constraints, objective: ObjectiveParams,
                    now: float, pickup_times, incumbent_specs=None,
                    per_vehicle_cap: int | None = None) -> list:
    """All servable (vehicle, bundle) options with their best schedules.

    candidate_ids are the waiting requests open for reassignment; each
    vehicle's onboard customers are part of every one of its bundles.
    Vehicles listed in incumbent_specs additionally keep their current
    plan as an option even when it fails re-validation, so an assignment
    at least as good as the current one always exists.
    """
    min_fac = network.min_factor()
    req_times = {rid: r.t_req_s for rid, r in requests.items()}
    out = []
    for veh in sorted(vehicles, key=lambda v: v.vehicle_id):
        base = frozenset(veh.onboard)
        cands = [rid for rid in sorted(set(candidate_ids) - base)
                 if _reachable(network, veh, requests[rid], constraints, now, min_fac)]
        pair_ok = {}
        for a, b in combinations(cands, 2):
            pair_ok[(a, b)] = pair_shareable(
                network, requests[a], requests[b], constraints, min_fac)
        found: dict = {}

        def note(add_set, cost, sched, grandfathered=False):
            key = frozenset(add_set)
            cur = found.get(key)
            if cur is None or cost < cur[0]:
                found[key] = (cost, sched, grandfathered)

        if base:
            got = _best_bundle_order(network, veh, (), requests, pickup_times,
                                     constraints, objective, now)
            if got is not None:
                note((), got[0], got[1])
        present_prev = {frozenset()}
        level = 1
        while present_prev and level <= len(cands):
            present_now = set()
            for add in sorted(present_prev, key=sorted):
                top = max(add) if add else None
                for rid in cands:
                    if top is not None and rid <= top:
                        continue
                    grown = add | {rid}
                    if grown in present_now:
                        continue
                    if any(not pair_ok[tuple(sorted((rid, other)))] for other in add):
                        continue
                    if level > 1 and any(
                            grown - {x} not in present_prev for x in grown):
                        continue
                    got = _best_bundle_order(network, veh, sorted(grown), requests,
                                             pickup_times, constraints, objective, now)
                    if got is not None:
                        present_now.add(grown)
                        note(grown, got[0], got[1])
            present_prev = present_now
            level += 1

        inc = (incumbent_specs or {}).get(veh.vehicle_id)
        if inc:
            # current plan survives even if stale; cheaper searched
            # orders for the same bundle win the tie
            inc_sched, _ = plan_stop_sequence(
                network, veh, inc, now, requests, pickup_times, constraints,
                enforce=False)
            inc_cost = schedule_cost(inc_sched, objective, req_times)
            inc_add = frozenset(inc_sched.bundle) - base
            cur = found.get(inc_add)
            if cur is None or cur[0] > inc_cost:
                found[inc_add] = (inc_cost, inc_sched, True)
            if base and frozenset() not in found:
                only_base = _restricted_specs(inc, base)
                fb_sched, _ = plan_stop_sequence(
                    network, veh, only_base, now, requests, pickup_times,
                    constraints, enforce=False)
                fb_cost = schedule_cost(fb_sched, objective, req_times)
                found[frozenset()] = (fb_cost, fb_sched, True)

        entries = []
        for add in sorted(found, key=sorted):
            if not add and not base:
                continue
            cost, sched, grand = found[add]
            entries.append(V2RB(
                vehicle_id=veh.vehicle_id, bundle=base | add, cost=cost,
                schedule=sched, grade=len(add), grandfathered=grand))
        entries.sort(key=lambda z: (z.grade, z.key()))
        if per_vehicle_cap is not None and len(entries) > per_vehicle_cap:
            keep = [z for z in entries
                    if z.grandfathered or z.bundle == base]
            kept = set(id(z) for z in keep)
            for z in entries:
                if len(keep) >= per_vehicle_cap and id(z) not in kept:
                    continue
                if id(z) not in kept:
                    keep.append(z)
                    kept.add(id(z))
            entries = sorted(keep, key=lambda z: (z.grade, z.key()))
        out.extend(sorted(entries, key=lambda z: z.key()))
    return out


# -- exact assignment ----------------------------------------------------


@dataclass
class AssignmentProblem:
    v2rbs: list
    assigned_ids: tuple
    optional_ids: tuple
    vehicle_ids: tuple


@dataclass
class AssignmentSolution:
    chosen: list
    objective: float
    by_vehicle: dict = field(default_factory=dict)


def build_problem(v2rbs, assigned_ids, optional_ids, vehicle_ids) -> AssignmentProblem:
    """Validate and canonicalize an assignment instance.

    Duplicate (vehicle, bundle) options keep the cheapest copy.  Raises
    InfeasibleAssignmentError when some required request appears in no
    option at all.
    """
    assigned = tuple(sorted(set(assigned_ids)))
    optional = tuple(sorted(set(optional_ids)))
    vids = tuple(sorted(set(vehicle_ids)))
    allowed = set(assigned) | set(optional)
    vid_set = set(vids)
    dedup: dict = {}
    for z in v2rbs:
        if z.vehicle_id not in vid_set:
            raise ValueError(f"option for unknown vehicle {z.vehicle_id}")
        stray = set(z.bundle) - allowed
        if stray:
            raise ValueError(f"option bundles unknown requests {sorted(stray)}")
        if not z.bundle:
            raise ValueError("empty bundle option")
        k = z.key()
        cur = dedup.get(k)
        if cur is None or z.cost < cur.cost:
            dedup[k] = z
    ordered = [dedup[k] for k in sorted(dedup)]
    covered = set()
    for z in ordered:
        covered |= z.bundle
    missing = [rid for rid in assigned if rid not in covered]
    if missing:
        raise InfeasibleAssignmentError(
            f"no option covers required requests {missing}")
    return AssignmentProblem(ordered, assigned, optional, vids)


def solve_ilp(problem: AssignmentProblem, initial_keys=None) -> AssignmentSolution:
    """Exact minimum-cost selection of options.

    Every required request is covered exactly once, optional requests at
    most once, and every vehicle carries at most one option.  Solved by
    depth-first branch and bound over LP relaxations; candidate values
    are recomputed from the option costs directly, never read off the LP
    objective, so equal solutions always produce the identical float.
    initial_keys seeds the incumbent, which bounds the result from above.

    Selections that tie in exact arithmetic can round to floats one ulp
    apart, and the LP cannot tell those apart.  After the first optimum a
    no-good cut excludes it and the remaining tie window is searched
    again, until no strictly smaller float total exists.  The returned
    objective is therefore the minimum over selections of the float sum
    itself, which is what an exhaustive enumeration finds.
    """
    vs = problem.v2rbs
    n = len(vs)
    if n == 0:
        if problem.assigned_ids:
            raise InfeasibleAssignmentError(
                f"no options but requests {list(problem.assigned_ids)} need serving")
        return AssignmentSolution([], 0.0, {})
    costs = [z.cost for z in vs]

    def canon_value(sel):
        total = 0.0
        for j in sel:
            total += costs[j]
        return total

    a_eq = [[1.0 if rid in vs[j].bundle else 0.0 for j in range(n)]
            for rid in problem.assigned_ids]
    b_eq = [1.0] * len(a_eq)
    base_ub = []
    for vid in problem.vehicle_ids:
        base_ub.append([1.0 if vs[j].vehicle_id == vid else 0.0
                        for j in range(n)])
    for rid in problem.optional_ids:
        base_ub.append([1.0 if rid in vs[j].bundle else 0.0 for j in range(n)])

    def branch(extra_rows, extra_b, best_val, best_sel, slack):
        a_ub = base_ub + extra_rows
        b_ub = [1.0] * len(base_ub) + extra_b
        stack = [{}]
        explored = 0
        while stack:
            fixed = stack.pop()
            explored += 1
            if explored > 500000:
                raise ConsistencyError("assignment search exploded")
            bounds = [(0.0, 1.0)] * n
            for j, v in fixed.items():
                bounds[j] = (float(v), float(v))
            res = linprog(costs, A_ub=a_ub or None, b_ub=b_ub or None,
                          A_eq=a_eq or None, b_eq=b_eq or None,
                          bounds=bounds, method="highs-ds")
            if res.status == 2:
                continue
            if not res.success:
                raise ConsistencyError(f"relaxation failed: {res.message}")
            if best_val is not None and res.fun >= best_val + slack:
                continue
            x = res.x
            frac = [j for j in range(n) if abs(x[j] - round(x[j])) > _INT_TOL]
            if not frac:
                sel = sorted(j for j in range(n) if x[j] > 0.5)
                val = canon_value(sel)
                if best_val is None or val < best_val:
                    best_val, best_sel = val, sel
                elif val == best_val and best_sel is not None:
                    keys = tuple(vs[j].key() for j in sel)
                    if keys < tuple(vs[j].key() for j in best_sel):
                        best_sel = sel
                continue
            j_star = min(frac, key=lambda j: (abs(x[j] - 0.5), j))
            down = dict(fixed)
            down[j_star] = 0
            up = dict(fixed)
            up[j_star] = 1
            stack.append(down)
            stack.append(up)     # explore the include branch first
        return best_val, best_sel

    best_val = None
    best_sel = None
    if initial_keys:
        index = {z.key(): j for j, z in enumerate(vs)}
        try:
            sel = sorted(index[k] for k in initial_keys)
        except KeyError as exc:
            raise ConsistencyError(f"starting option missing: {exc}") from exc
        best_val = canon_value(sel)
        best_sel = sel
    elif not problem.assigned_ids:
        best_val = 0.0
        best_sel = []

    best_val, best_sel = branch([], [], best_val, best_sel, _PRUNE_SLACK)
    if best_sel is None:
        raise InfeasibleAssignmentError(
            "no feasible combination covers every required request")

    cuts = []
    cut_b = []
    for _ in range(64):
        inside = set(best_sel)
        cuts.append([1.0 if j in inside else -1.0 for j in range(n)])
        cut_b.append(float(len(best_sel) - 1))
        # passing best_sel=None means only a strictly smaller float
        # total can come back; no improvement ends the sweep
        val, sel = branch(cuts, cut_b, best_val, None, _TIE_TOL)
        if sel is None:
            break
        best_val, best_sel = val, sel
    chosen = [vs[j] for j in best_sel]
    return AssignmentSolution(chosen, canon_value(best_sel),
                              {z.vehicle_id: z for z in chosen})


# -- re-optimization entry point -----------------------------------------


def reoptimize(operator, now: float, per_vehicle_cap: int | None = None) -> dict:
    """Globally reassign the operator's open requests across its fleet.

    Enumerates options, solves the assignment exactly, applies the
    chosen schedules, and returns a small summary.  The current plan is
    injected as the starting solution, so optimized_cost never exceeds
    incumbent_cost.
    """
    net = operator.network
    vehicles = sorted(operator.vehicles, key=lambda v: v.vehicle_id)
    assigned = sorted(operator.active_ids())
    candidates = sorted(operator.scheduled_ids)
    req_times = {rid: r.t_req_s for rid, r in operator.requests.items()}

    incumbent_specs = {}
    incumbent_keys = []
    incumbent_total = 0.0
    for veh in vehicles:
        if not veh.stops:
            continue
        specs = [StopSpec(s.node, s.board, s.alight) for s in veh.stops]
        incumbent_specs[veh.vehicle_id] = specs
        sched, _ = plan_stop_sequence(
            net, veh, specs, now, operator.requests, operator.pickup_times,
            operator.constraints, enforce=False)
        incumbent_total += schedule_cost(sched, operator.objective, req_times)
        incumbent_keys.append((veh.vehicle_id, tuple(sorted(sched.bundle))))

    options = enumerate_v2rbs(
        net, vehicles, operator.requests, candidates, operator.constraints,
        operator.objective, now, operator.pickup_times,
        incumbent_specs=incumbent_specs, per_vehicle_cap=per_vehicle_cap)
    problem = build_problem(options, assigned_ids=assigned, optional_ids=(),
                            vehicle_ids=[v.vehicle_id for v in vehicles])
    solution = solve_ilp(problem, initial_keys=incumbent_keys or None)

    n_changed = 0
    for veh in vehicles:
        pick = solution.by_vehicle.get(veh.vehicle_id)
        if pick is None:
            if veh.onboard:
                raise ConsistencyError(
                    f"vehicle {veh.vehicle_id} with riders left unassigned")
            if veh.stops:
                operator.apply_schedule(veh, None)
                n_changed += 1
            continue
        if not pick.grandfathered:
            bad = check_feasibility(pick.schedule, veh, operator.constraints,
                                    operator.requests, operator.pickup_times)
            if bad is not None:
                raise ConsistencyError(
                    f"reoptimization chose an infeasible schedule: {bad}")
        before = [(s.node, s.board, s.alight) for s in veh.stops]
        after = [(s.node, s.board, s.alight) for s in pick.schedule.stops]
        if before != after:
            n_changed += 1
        operator.apply_schedule(veh, pick.schedule)
    operator.state_version += 1
    return {
        "incumbent_cost": incumbent_total,
        "optimized_cost": solution.objective,
        "n_options": len(options),
        "n_changed": n_changed,
    }


# -- brute-force reference (tests only) ----------------------------------


def oracle_best_cost(network, vehicle, add_ids, requests, pickup_times,
                     constraints, objective, now):
    """Exhaustive minimum schedule cost for one vehicle and bundle.

    Plain recursive generation of every pickup-before-dropoff order; the
    only shortcut is abandoning orders whose remaining pickups are
    already past their wait deadline, which no completion could fix.
    """
    t0 = max(now, vehicle.busy_until)
    if vehicle.edge is not None:
        t0 = t0 + network.profile.elapsed_for_base(t0, vehicle.edge_remaining_tt_base)
    node0 = vehicle.node
    everyone = sorted(set(vehicle.onboard) | set(add_ids))
    slots = []
    for rid in sorted(add_ids):
        slots.append(("pick", rid))
    for rid in everyone:
        slots.append(("drop", rid))
    best = [None]
    times: dict = {}

    def walk(node, t, dist, riding, remaining):
        if not remaining:
            waiting_total = 0.0
            for rid in everyone:
                waiting_total += times[("arr", rid)] - requests[rid].t_req_s
            value = (objective.dist_weight * dist
                     + objective.time_weight * waiting_total
                     - objective.assignment_reward * len(everyone))
            if best[0] is None or value < best[0]:
                best[0] = value
            return
        for what, rid in remaining:
            if what == "pick":
                latest = requests[rid].t_req_s + constraints.max_wait_s
                if t > latest:
                    return
        for pos in range(len(remaining)):
            what, rid = remaining[pos]
            if what == "pick":
                target = requests[rid].origin
            else:
                if rid not in riding:
                    continue
                target = requests[rid].destination
            if target != node:
                t_here = t + network.travel_time(node, target, t)
                d_here = dist + network.distance(node, target)
            else:
                t_here, d_here = t, dist
            if what == "pick":
                if t_here > requests[rid].t_req_s + constraints.max_wait_s:
                    continue
                if len(riding) >= constraints.capacity:
                    continue
                riding.add(rid)
                times[("pick", rid)] = t_here
            else:
                started = pickup_times.get(rid, times.get(("pick", rid)))
                allowed = (1.0 + constraints.max_detour_rel) * requests[rid].direct_time_s
                if started is None or t_here - started > allowed:
                    continue
                riding.discard(rid)
                times[("arr", rid)] = t_here
            walk(target, t_here + constraints.dwell_s, d_here, riding,
                 remaining[:pos] + remaining[pos + 1:])
            if what == "pick":
                riding.discard(rid)
                del times[("pick", rid)]
            else:
                riding.add(rid)
                del times[("arr", rid)]

    walk(node0, t0, 0.0, set(vehicle.onboard), tuple(slots))
    return best[0]


def oracle_enumerate(network, vehicles, candidate_ids, requests, pickup_times,
                     constraints, objective, now):
    """Every servable (vehicle, bundle) with its exhaustive best cost."""
    table = {}
    cands = sorted(candidate_ids)
    for veh in sorted(vehicles, key=lambda v: v.vehicle_id):
        base = frozenset(veh.onboard)
        usable = [rid for rid in cands if rid not in base]
        for k in range(len(usable) + 1):
            for combo in combinations(usable, k):
                if not base and not combo:
                    continue
                value = oracle_best_cost(network, veh, combo, requests,
                                         pickup_times, constraints, objective, now)
                if value is not None:
                    key = (veh.vehicle_id, tuple(sorted(base | set(combo))))
                    table[key] = value
    return table


def oracle_assignment(table, vehicle_ids, assigned_ids, optional_ids=()):
    """Exhaustive best disjoint bundle choice; (value, keys) or None."""
    vids = sorted(set(vehicle_ids))
    per = {v: [] for v in vids}
    for (v, b) in sorted(table):
        per[v].append(b)
    must = frozenset(assigned_ids)
    allowed = must | frozenset(optional_ids)
    best = [None, None]

    def go(i, used, total, picked):
        if i == len(vids):
            if must <= used:
                if (best[0] is None or total < best[0]
                        or (total == best[0] and picked < best[1])):
                    best[0] = total
                    best[1] = list(picked)
            return
        go(i + 1, used, total, picked)
        v = vids[i]
        for b in per[v]:
            sb = frozenset(b)
            if (sb & used) or not sb <= allowed:
                continue
            picked.append((v, b))
            go(i + 1, used | sb, total + table[(v, b)], picked)
            picked.pop()

    go(0, frozenset(), 0.0, [])
    if best[0] is None:
        return None
    return best[0], best[1]


# -- plain-text round trip ------------------------------------------------


def dump_problem(problem: AssignmentProblem) -> str:
    """Serialize an instance (costs only; schedules are not portable)."""
    data = {
        "assigned": list(problem.assigned_ids),
        "optional": list(problem.optional_ids),
        "vehicles": list(problem.vehicle_ids),
        "options": [
            {"vehicle": z.vehicle_id, "bundle": sorted(z.bundle),
             "cost": z.cost, "grade": z.grade}
            for z in problem.v2rbs
        ],
    }
    return json.dumps(data, indent=2, sort_keys=True)


def load_problem(text: str) -> AssignmentProblem:
    data = json.loads(text)
    options = [
        V2RB(vehicle_id=int(o["vehicle"]), bundle=frozenset(o["bundle"]),
             cost=float(o["cost"]), schedule=None,
             grade=int(o.get("grade", len(o["bundle"]))))
        for o in data["options"]
    ]
    return build_problem(options, data["assigned"], data["optional"],
                         data["vehicles"])
