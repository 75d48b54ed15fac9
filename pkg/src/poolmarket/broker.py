"""Request dispatch across operators for the four market setups.

single           one provider serves everyone
independent      each request belongs to one provider (market split)
user_decision    all providers quote; the customer takes the earliest arrival
broker_decision  all providers quote; a broker takes the smallest added distance

Customers decide immediately: the winning offer is booked on the spot
and the losing quotes are discarded.  An operator that was asked and had
nothing to offer gets its no-offer counter bumped; operators that simply
lost the comparison do not.
"""

from __future__ import annotations

SCENARIOS = ("single", "independent", "user_decision", "broker_decision")


class DispatchError(RuntimeError):
    """Scenario plumbing misused (wrong operator count, missing split)."""


def _pick(offers, metric, rng):
    best = min(metric(o) for o in offers)
    tied = [o for o in offers if metric(o) == best]
    if len(tied) == 1:
        return tied[0]
    return tied[rng.randrange(len(tied))]


def decide(scenario: str, offers, rng):
    """Winning offer under the given setup, or None when nobody can serve.

    ``offers`` must be listed in ascending operator id so tie draws are
    reproducible.
    """
    if not offers:
        return None
    if scenario in ("single", "independent"):
        if len(offers) != 1:
            raise DispatchError(
                f"{scenario} expects one quote, got {len(offers)}")
        return offers[0]
    if scenario == "user_decision":
        return _pick(offers, lambda o: o.arrival_s, rng)
    if scenario == "broker_decision":
        return _pick(offers, lambda o: o.extra_distance_m, rng)
    raise DispatchError(f"unknown scenario {scenario!r}")


def dispatch_request(request, scenario: str, operators, assignment, now: float,
                     rng, event_sink=None) -> dict:
    """Ask the right operators, settle the choice, book the winner.

    ``assignment`` maps request id to operator id for the independent
    setup and is ignored otherwise.  Returns a summary of what happened;
    offer and decision records go to ``event_sink`` when given.
    """
    log = event_sink if event_sink is not None else (lambda *a, **k: None)
    if scenario not in SCENARIOS:
        raise DispatchError(f"unknown scenario {scenario!r}")
    if scenario == "single":
        if len(operators) != 1:
            raise DispatchError("single setup needs exactly one operator")
        asked = list(operators)
    elif scenario == "independent":
        if assignment is None or request.request_id not in assignment:
            raise DispatchError(
                f"request {request.request_id} has no operator in the split")
        wanted = assignment[request.request_id]
        asked = [op for op in operators if op.op_id == wanted]
        if not asked:
            raise DispatchError(f"operator {wanted} not present")
    else:
        asked = sorted(operators, key=lambda op: op.op_id)

    offers = []
    for op in asked:
        offer = op.insertion_offer(request, now)
        if offer is None:
            op.n_no_offer += 1
            log("offer", now, request=request.request_id, operator=op.op_id,
                made=False)
        else:
            offers.append(offer)
            log("offer", now, request=request.request_id, operator=op.op_id,
                made=True, vehicle=offer.vehicle_id, wait_s=offer.wait_s,
                arrival_s=offer.arrival_s, fare_eur=offer.fare_eur,
                extra_distance_m=offer.extra_distance_m)

    winner = decide(scenario, offers, rng)
    outcome = {
        "request_id": request.request_id,
        "ops_asked": [op.op_id for op in asked],
        "n_offers": len(offers),
        "operator": None,
        "vehicle": None,
        "wait_s": None,
        "arrival_s": None,
        "fare_eur": None,
        "extra_distance_m": None,
    }
    if winner is not None:
        by_id = {op.op_id: op for op in operators}
        by_id[winner.operator_id].book(winner, request, now)
        outcome.update(operator=winner.operator_id, vehicle=winner.vehicle_id,
                       wait_s=winner.wait_s, arrival_s=winner.arrival_s,
                       fare_eur=winner.fare_eur,
                       extra_distance_m=winner.extra_distance_m)
    log("decision", now, request=request.request_id,
        operator=outcome["operator"], vehicle=outcome["vehicle"],
        wait_s=outcome["wait_s"], arrival_s=outcome["arrival_s"],
        fare_eur=outcome["fare_eur"],
        extra_distance_m=outcome["extra_distance_m"],
        ops_asked=outcome["ops_asked"], n_offers=outcome["n_offers"])
    return outcome
