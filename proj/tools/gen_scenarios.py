#!/usr/bin/env python3
"""Regenerates the scenario data files in data/.

The 68-bus line list follows the 16-machine NETS-NYPS single-line diagram
(generators at buses 53-68); stiffness is the uniform 1.5 MW/rad used by the
reference experiments, so only the graph shape matters here.
"""
import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "data")

EDGES_68 = [
    (1, 2), (1, 27), (1, 30), (1, 47),
    (2, 3), (2, 25), (2, 53),
    (3, 4), (3, 18),
    (4, 5), (4, 14),
    (5, 6), (5, 8),
    (6, 7), (6, 11), (6, 54),
    (7, 8),
    (8, 9),
    (9, 30), (9, 36),
    (10, 11), (10, 13), (10, 55),
    (11, 12),
    (12, 13),
    (13, 14),
    (14, 15),
    (15, 16),
    (16, 17), (16, 19), (16, 21), (16, 24),
    (17, 18), (17, 27),
    (19, 20), (19, 56),
    (20, 57),
    (21, 22),
    (22, 23), (22, 58),
    (23, 24), (23, 59),
    (25, 26), (25, 60),
    (26, 27), (26, 28), (26, 29),
    (28, 29),
    (29, 61),
    (30, 31), (30, 32),
    (31, 38), (31, 62),
    (32, 33), (32, 63),
    (33, 34), (33, 38),
    (34, 35), (34, 36),
    (35, 45),
    (36, 37), (36, 64),
    (37, 43), (37, 52), (37, 65),
    (38, 46),
    (39, 44), (39, 45),
    (40, 41), (40, 48),
    (41, 42), (41, 66),
    (42, 52), (42, 67),
    (43, 44),
    (44, 45),
    (45, 51),
    (46, 49),
    (47, 48),
    (48, 49),
    (50, 51), (50, 52),
    (51, 52),
    (52, 68),
]

GEN_BUSES = list(range(53, 69))
LOAD_BUSES = [1, 3, 4, 7, 8, 9, 15, 16, 18, 20, 21, 23, 24, 25,
              26, 27, 28, 29, 33, 36, 39, 40, 41, 42]


def gen_params():
    return {"m": 10.0, "D": 1.0, "T_CH": 0.3, "T_G": 0.2, "R": 0.05,
            "tau": 150.0, "b_prime": 40.0, "c_prime": -0.8}


def load_params():
    return {"m": 10.0, "D": 1.0, "tau": 150.0, "b_prime": 40.0, "c_prime": -0.8}


def passive_params():
    return {"m": 10.0, "D": 15.0}


def wind_gen(rho_l):
    # 300 sin(rho_l t): chi = (30 sin, 30 rho cos), psi = [10, 0]
    return {"low": [{"rho": rho_l, "psi": [10.0, 0.0], "chi0": [0.0, 30.0 * rho_l]}],
            "rho_max": 2.0 * rho_l}


def wind_load(rho_l, rho_m, rho_max):
    return {"low": [{"rho": rho_l, "psi": [10.0, 0.0], "chi0": [0.0, 30.0 * rho_l]}],
            "medium": [{"rho": rho_m, "psi": [10.0, 0.0], "chi0": [0.0, 40.0 * rho_m]}],
            "rho_max": rho_max}


def demand_signal():
    return {"constant": 100.0,
            "sinusoids": [{"amplitude": 50.0, "frequency_rad": 0.01, "phase": 0.0}]}


GAINS = {
    "robust": {
        "generator": [5.0, 10.0, 15.0, 35.0, 3.0],
        "load": [5.0, 10.0, 15.0],
        "M": {"2": [[-2.0, 0.0], [11.0, -2.5]],
              "4": [[-2.0, 0.0, 0.0, 0.0], [11.0, -2.5, 0.0, 0.0],
                    [4.0, -1.0, -3.0, 0.0], [-6.0, 5.0, 1.0, -3.5]]},
        "N": {"2": [1.0, 1.0], "4": [1.0, 1.0, 1.0, 1.0]},
    },
    "adaptive": {
        "generator": [15.0, 20.0, 40.0, 3.0],
        "load": [15.0, 20.0, 40.0],
        "M": {"2": [[-2.0, 0.0], [11.0, -2.5]],
              "4": [[-2.0, 0.0, 0.0, 0.0], [11.0, -2.5, 0.0, 0.0],
                    [4.0, -1.0, -3.0, 0.0], [-6.0, 5.0, 1.0, -3.5]]},
        "N": {"2": [1.0, 1.0], "4": [1.0, 1.0, 1.0, 1.0]},
    },
}


def ieee68(rho_l, rho_m, rho_max_load, events):
    buses = []
    for b in range(1, 69):
        if b in GEN_BUSES:
            entry = {"id": str(b), "kind": "G", "params": gen_params(),
                     "theta_star": 0.0, "wind": wind_gen(rho_l),
                     "inelastic_demand": demand_signal()}
        elif b in LOAD_BUSES:
            entry = {"id": str(b), "kind": "L", "params": load_params(),
                     "theta_star": 0.0, "wind": wind_load(rho_l, rho_m, rho_max_load),
                     "inelastic_demand": demand_signal()}
        else:
            entry = {"id": str(b), "kind": "T", "params": passive_params(),
                     "theta_star": 0.0}
        buses.append(entry)
    return {
        "setpoint_hz": 60.0,
        "bess_time_constant": 1.0,
        "delta": 0.1,
        "controller": "robust",
        "integrator": {"dt": 1e-3, "t_end": 150.0},
        "buses": buses,
        "edges": [[str(a), str(b), 1.5] for a, b in EDGES_68],
        "events": events,
        "gains": GAINS,
    }


def connect_all(t):
    return [{"time_s": t, "bus": str(b), "action": "wind_connect"}
            for b in GEN_BUSES + sorted(LOAD_BUSES)]


def twobus():
    return {
        "setpoint_hz": 60.0,
        "bess_time_constant": 1.0,
        "delta": 0.1,
        "controller": "robust",
        "integrator": {"dt": 1e-3, "t_end": 40.0},
        "buses": [
            {"id": "G1", "kind": "G", "params": gen_params(), "theta_star": 0.0,
             "wind": wind_gen(0.1), "inelastic_demand": demand_signal()},
            {"id": "L1", "kind": "L", "params": load_params(), "theta_star": 0.0,
             "wind": wind_load(0.1, 0.2, 0.3), "inelastic_demand": demand_signal()},
        ],
        "edges": [["G1", "L1", 1.5]],
        "events": [{"time_s": 0.0, "bus": "G1", "action": "wind_connect"},
                   {"time_s": 0.0, "bus": "L1", "action": "wind_connect"}],
        "gains": GAINS,
    }


def singlegen():
    # Gains sized so the slowest closed-loop modes are the internal-model
    # ones: the eta tracking rate is then governed by max Re eig(M).
    gains = {"robust": {"generator": [10.0, 20.0, 30.0, 50.0, 6.0],
                        "M": GAINS["robust"]["M"], "N": GAINS["robust"]["N"]}}
    return {
        "setpoint_hz": 60.0,
        "bess_time_constant": 1.0,
        "delta": 0.1,
        "controller": "robust",
        "integrator": {"dt": 1e-3, "t_end": 40.0},
        "buses": [
            {"id": "G1", "kind": "G", "params": gen_params(), "theta_star": 0.0,
             "wind": wind_gen(0.1), "inelastic_demand": demand_signal()},
        ],
        "edges": [],
        "events": [{"time_s": 0.0, "bus": "G1", "action": "wind_connect"}],
        "gains": gains,
    }


def twobus_nowind():
    return {
        "setpoint_hz": 60.0,
        "bess_time_constant": 1.0,
        "delta": 0.1,
        "controller": "robust",
        "integrator": {"dt": 2e-5, "t_end": 4.0},
        "buses": [
            {"id": "G1", "kind": "G", "params": gen_params(), "theta_star": 0.0,
             "inelastic_demand": demand_signal()},
            {"id": "L1", "kind": "L", "params": load_params(), "theta_star": 0.0,
             "inelastic_demand": demand_signal()},
        ],
        "edges": [["G1", "L1", 1.5]],
        "events": [],
    }


def check(scn):
    n = len(scn["buses"])
    ids = {b["id"] for b in scn["buses"]}
    assert len(ids) == n
    adj = {i: set() for i in ids}
    for a, b, _ in scn["edges"]:
        assert a != b and a in ids and b in ids
        assert b not in adj[a], (a, b)
        adj[a].add(b)
        adj[b].add(a)
    seen = set()
    stack = [next(iter(ids))]
    while stack:
        v = stack.pop()
        if v in seen:
            continue
        seen.add(v)
        stack.extend(adj[v])
    assert len(seen) == n, f"disconnected: {len(seen)}/{n}"
    kinds = {}
    for b in scn["buses"]:
        kinds[b["kind"]] = kinds.get(b["kind"], 0) + 1
        if b["kind"] == "T":
            assert b["params"]["D"] > 1.5 * len(adj[b["id"]])
    return kinds


def main():
    os.makedirs(DATA, exist_ok=True)
    files = {
        "ieee68.json": ieee68(0.1, 0.2, 0.3, connect_all(0.0)),
        "ieee68_fast_wind.json": ieee68(1.0, 2.0, 3.0, connect_all(0.0)),
        "ieee68_compare.json": ieee68(0.1, 0.2, 0.3, connect_all(10.0) + [
            {"time_s": 120.0, "bus": str(b), "action": "wind_disconnect"}
            for b in GEN_BUSES + sorted(LOAD_BUSES)]),
        "twobus.json": twobus(),
        "singlegen.json": singlegen(),
        "twobus_nowind.json": twobus_nowind(),
    }
    for name, scn in files.items():
        kinds = check(scn)
        print(name, kinds, len(scn["edges"]), "edges")
        with open(os.path.join(DATA, name), "w") as f:
            json.dump(scn, f, indent=1)
            f.write("\n")


if __name__ == "__main__":
    main()
