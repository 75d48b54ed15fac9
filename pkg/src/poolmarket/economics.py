"""Provider-side money: fares, standing and distance costs, penalties.

Revenue is distance-proportional on the direct (not driven) distance of
each served customer.  Costs are a per-day standing charge per vehicle,
pro-rated to the simulated horizon, plus a per-kilometer operating cost
on the distance the fleet actually drove.  The effective profit
additionally charges a fixed penalty for every request the operator was
asked about but could not quote, which prices lost goodwill into the
fleet-sizing game.
"""

from __future__ import annotations

from dataclasses import dataclass

SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class EconParams:
    fare_eur_per_km: float = 0.43
    vehicle_cost_eur_per_day: float = 25.0
    distance_cost_eur_per_km: float = 0.25
    no_service_penalty_eur: float = 0.46

    @property
    def fare_eur_per_m(self) -> float:
        return self.fare_eur_per_km / 1000.0


@dataclass(frozen=True)
class ProfitBreakdown:
    revenue_eur: float
    vehicle_cost_eur: float
    distance_cost_eur: float

    @property
    def profit_eur(self) -> float:
        return self.revenue_eur - self.vehicle_cost_eur - self.distance_cost_eur


def compute_profit(served_direct_distance_m: float, fleet_distance_m: float,
                   fleet_size: int, horizon_s: float,
                   econ: EconParams) -> ProfitBreakdown:
    revenue = econ.fare_eur_per_km * served_direct_distance_m / 1000.0
    vehicle_cost = fleet_size * econ.vehicle_cost_eur_per_day * (horizon_s / SECONDS_PER_DAY)
    distance_cost = econ.distance_cost_eur_per_km * fleet_distance_m / 1000.0
    return ProfitBreakdown(revenue, vehicle_cost, distance_cost)


def compute_effective_profit(profit_eur: float, n_no_offer: int,
                             econ: EconParams) -> float:
    return profit_eur - econ.no_service_penalty_eur * n_no_offer
