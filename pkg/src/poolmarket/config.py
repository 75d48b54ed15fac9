"""Config files to runnable objects, with errors that name the bad key.

YAML throughout (JSON parses too).  Messages carry the key path and,
when the key can be found in the source text, its line number, so a
failing config is fixable without reading this module.
"""

from __future__ import annotations

from pathlib import Path

import yaml

from .demand import read_trip_rows, RawTrip
from .economics import EconParams
from .game import GameConfig, OperatorParams
from .network import Network, TravelTimeProfile
from .operators import Constraints
from .simcore import OperatorConfig, SimulationConfig

_TOP_KEYS = {
    "network", "network_file", "scenario", "horizon_s", "step_s",
    "reposition_interval_s", "master_seed", "subsample_rate", "demand",
    "operators", "constraints", "econ", "reoptimize_enabled",
    "reposition_enabled", "per_vehicle_cap", "game", "calibration",
}


class ConfigError(Exception):
    pass


class _Source:
    """Remembers the raw text so errors can point at a line."""

    def __init__(self, path, text: str):
        self.path = str(path)
        self.lines = text.splitlines()

    def fail(self, keypath: str, problem: str):
        key = keypath.split(".")[-1].split("[")[0]
        for no, line in enumerate(self.lines, start=1):
            if line.lstrip().startswith(key + ":"):
                raise ConfigError(
                    f"{self.path}:{no}: {keypath}: {problem}")
        raise ConfigError(f"{self.path}: {keypath}: {problem}")


def load_file(path) -> tuple[dict, _Source]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc})") from exc
    src = _Source(path, text)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc, src


def _reject_unknown(mapping, allowed, where, src):
    for key in mapping:
        if key not in allowed:
            src.fail(f"{where}.{key}" if where else str(key),
                     "unknown key")


def _opt(mapping, key, kind, default, where, src):
    if key not in mapping or mapping[key] is None:
        return default
    value = mapping[key]
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        return kind(value)
    except (TypeError, ValueError):
        src.fail(f"{where}.{key}" if where else key,
                 f"expected {kind.__name__}, got {value!r}")


def _need(mapping, key, where, src):
    if key not in mapping:
        src.fail(f"{where}.{key}" if where else key, "missing required key")
    return mapping[key]


def build_network(doc: dict, src: _Source, base_dir: Path) -> Network:
    spec = doc.get("network")
    if spec is None and "network_file" in doc:
        sub, sub_src = load_file(base_dir / doc["network_file"])
        spec, src = sub.get("network", sub), sub_src
    if not isinstance(spec, dict):
        src.fail("network", "missing or not a mapping")
    _reject_unknown(spec, {"nodes", "edges", "zones", "profile"},
                    "network", src)
    raw_nodes = _need(spec, "nodes", "network", src)
    if isinstance(raw_nodes, bool):
        src.fail("network.nodes", "expected count, mapping or list")
    if isinstance(raw_nodes, int):
        # count shorthand: ids 0..n-1 laid out on a line
        nodes = {i: (float(i), 0.0) for i in range(raw_nodes)}
    elif isinstance(raw_nodes, dict):
        nodes = {int(k): tuple(v) for k, v in raw_nodes.items()}
    elif isinstance(raw_nodes, list):
        nodes = {int(r[0]): (r[1], r[2]) for r in raw_nodes}
    else:
        src.fail("network.nodes", "expected count, mapping or list")
    edges = _need(spec, "edges", "network", src)
    if not isinstance(edges, list):
        src.fail("network.edges", "expected a list of [u, v, meters, seconds]")
    for i, row in enumerate(edges):
        if not isinstance(row, (list, tuple)) or len(row) != 4:
            src.fail(f"network.edges[{i}]",
                     "expected [u, v, meters, seconds]")
    zones = spec.get("zones")
    if zones is not None:
        zones = {int(k): int(v) for k, v in zones.items()}
    profile = None
    if spec.get("profile") is not None:
        p = spec["profile"]
        _reject_unknown(p, {"factors", "interval_s"}, "network.profile", src)
        profile = TravelTimeProfile(
            tuple(p.get("factors", (1.0,))),
            interval_s=float(p.get("interval_s", 900.0)))
    try:
        return Network(nodes, [tuple(e) for e in edges], zones=zones,
                       profile=profile)
    except Exception as exc:
        src.fail("network", str(exc))


def _build_constraints(doc, src) -> Constraints:
    spec = doc.get("constraints") or {}
    _reject_unknown(spec, {"capacity", "max_wait_s", "max_detour_rel",
                           "dwell_s"}, "constraints", src)
    return Constraints(
        capacity=_opt(spec, "capacity", int, 4, "constraints", src),
        max_wait_s=_opt(spec, "max_wait_s", float, 360.0, "constraints", src),
        max_detour_rel=_opt(spec, "max_detour_rel", float, 0.4,
                            "constraints", src),
        dwell_s=_opt(spec, "dwell_s", float, 0.0, "constraints", src))


def _build_econ(doc, src) -> EconParams:
    spec = doc.get("econ") or {}
    _reject_unknown(spec, {"fare_eur_per_km", "vehicle_cost_eur_per_day",
                           "distance_cost_eur_per_km",
                           "no_service_penalty_eur"}, "econ", src)
    return EconParams(
        fare_eur_per_km=_opt(spec, "fare_eur_per_km", float, 0.43,
                             "econ", src),
        vehicle_cost_eur_per_day=_opt(spec, "vehicle_cost_eur_per_day",
                                      float, 25.0, "econ", src),
        distance_cost_eur_per_km=_opt(spec, "distance_cost_eur_per_km",
                                      float, 0.25, "econ", src),
        no_service_penalty_eur=_opt(spec, "no_service_penalty_eur", float,
                                    0.46, "econ", src))


def _build_operator(spec, i, src) -> OperatorConfig:
    where = f"operators[{i}]"
    if not isinstance(spec, dict):
        src.fail(where, "expected a mapping")
    _reject_unknown(spec, {"fleet_size", "c_dis_eur_per_km",
                           "c_vot_eur_per_h", "assignment_reward_eur",
                           "start_nodes"}, where, src)
    fleet = _need(spec, "fleet_size", where, src)
    reward = spec.get("assignment_reward_eur")
    starts = spec.get("start_nodes")
    return OperatorConfig(
        fleet_size=int(fleet),
        c_dis_eur_per_km=_opt(spec, "c_dis_eur_per_km", float, 0.25,
                              where, src),
        c_vot_eur_per_h=_opt(spec, "c_vot_eur_per_h", float, 16.2,
                             where, src),
        assignment_reward_eur=None if reward is None else float(reward),
        start_nodes=None if starts is None else [int(n) for n in starts])


def _build_demand(doc, src, base_dir):
    spec = doc.get("demand") or {}
    _reject_unknown(spec, {"rate_per_hour", "trips_file", "trips"},
                    "demand", src)
    given = [k for k in ("rate_per_hour", "trips_file", "trips") if k in spec]
    if len(given) > 1:
        src.fail("demand", f"choose one of {given}")
    if "trips" in spec:
        trips = []
        for i, row in enumerate(spec["trips"]):
            if not isinstance(row, (list, tuple)) or len(row) not in (4, 5):
                src.fail(f"demand.trips[{i}]",
                         "expected [id, t_req_s, origin, destination]")
            dur = float(row[4]) if len(row) == 5 else None
            trips.append(RawTrip(int(row[0]), float(row[1]), int(row[2]),
                                 int(row[3]), dur))
        return trips, None
    if "trips_file" in spec:
        return read_trip_rows(base_dir / spec["trips_file"]), None
    if "rate_per_hour" in spec:
        return None, float(spec["rate_per_hour"])
    return None, None


def build_simulation(doc: dict, src: _Source, base_dir) -> SimulationConfig:
    base_dir = Path(base_dir)
    _reject_unknown(doc, _TOP_KEYS, "", src)
    network = build_network(doc, src, base_dir)
    ops_spec = _need(doc, "operators", "", src)
    if not isinstance(ops_spec, list) or not ops_spec:
        src.fail("operators", "expected a non-empty list")
    operators = [_build_operator(s, i, src) for i, s in enumerate(ops_spec)]
    trips, rate = _build_demand(doc, src, base_dir)
    return SimulationConfig(
        network=network,
        scenario=_opt(doc, "scenario", str, "single", "", src),
        horizon_s=_opt(doc, "horizon_s", float, 3600.0, "", src),
        step_s=_opt(doc, "step_s", float, 60.0, "", src),
        reposition_interval_s=_opt(doc, "reposition_interval_s", float,
                                   900.0, "", src),
        operators=operators,
        constraints=_build_constraints(doc, src),
        econ=_build_econ(doc, src),
        trips=trips,
        demand_rate_per_hour=rate,
        subsample_rate=_opt(doc, "subsample_rate", float, 1.0, "", src),
        master_seed=_opt(doc, "master_seed", int, 0, "", src),
        reoptimize_enabled=_opt(doc, "reoptimize_enabled", bool, True,
                                "", src),
        reposition_enabled=_opt(doc, "reposition_enabled", bool, True,
                                "", src),
        per_vehicle_cap=(None if doc.get("per_vehicle_cap") is None
                         else int(doc["per_vehicle_cap"])))


def build_game(doc: dict, src: _Source, base_dir) -> GameConfig:
    base = build_simulation(doc, src, base_dir)
    spec = doc.get("game")
    if not isinstance(spec, dict):
        src.fail("game", "missing or not a mapping")
    _reject_unknown(spec, {"initial_params", "fleet_step", "fleet_count",
                           "objective_options", "min_fleet_step",
                           "min_c_vot_gap_eur_per_h", "turn_limit", "jobs"},
                    "game", src)
    raw = spec.get("initial_params")
    if raw is None:
        params = tuple(OperatorParams(oc.fleet_size, oc.c_dis_eur_per_km,
                                      oc.c_vot_eur_per_h)
                       for oc in base.operators)
    else:
        params = []
        for i, p in enumerate(raw):
            where = f"game.initial_params[{i}]"
            if not isinstance(p, dict) or "fleet_size" not in p:
                src.fail(where, "expected a mapping with fleet_size")
            params.append(OperatorParams(
                int(p["fleet_size"]),
                float(p.get("c_dis_eur_per_km", 0.25)),
                float(p.get("c_vot_eur_per_h", 16.2))))
        params = tuple(params)
    opts = spec.get("objective_options")
    if opts is None:
        options = tuple(sorted({p.objective() for p in params},
                               key=lambda o: (-o[1], o[0])))
    else:
        options = tuple((float(a), float(b)) for a, b in opts)
    return GameConfig(
        base=base, initial_params=params,
        fleet_step=_opt(spec, "fleet_step", int, 2, "game", src),
        fleet_count=_opt(spec, "fleet_count", int, 3, "game", src),
        objective_options=options,
        min_fleet_step=_opt(spec, "min_fleet_step", int, 1, "game", src),
        min_c_vot_gap_eur_per_h=_opt(spec, "min_c_vot_gap_eur_per_h", float,
                                     1.0, "game", src),
        turn_limit=_opt(spec, "turn_limit", int, 10, "game", src),
        jobs=_opt(spec, "jobs", int, 1, "game", src))


def build_calibration(doc: dict, src: _Source, base_dir) -> dict:
    base = build_simulation(doc, src, base_dir)
    spec = doc.get("calibration")
    if not isinstance(spec, dict):
        src.fail("calibration", "missing or not a mapping")
    _reject_unknown(spec, {"fleet_sizes", "target_service_rate",
                           "p_no_step_eur", "p_no_max_eur"},
                    "calibration", src)
    sizes = _need(spec, "fleet_sizes", "calibration", src)
    if isinstance(sizes, dict):
        _reject_unknown(sizes, {"start", "stop", "step"},
                        "calibration.fleet_sizes", src)
        sizes = list(range(int(sizes.get("start", 1)),
                           int(_need(sizes, "stop",
                                     "calibration.fleet_sizes", src)) + 1,
                           int(sizes.get("step", 1))))
    elif not isinstance(sizes, list):
        src.fail("calibration.fleet_sizes",
                 "expected a list or {start, stop, step}")
    return {
        "base": base,
        "fleet_sizes": [int(n) for n in sizes],
        "target_service_rate": _opt(spec, "target_service_rate", float,
                                    0.9, "calibration", src),
        "p_no_step_eur": _opt(spec, "p_no_step_eur", float, 0.01,
                              "calibration", src),
        "p_no_max_eur": _opt(spec, "p_no_max_eur", float, 5.0,
                             "calibration", src),
    }
