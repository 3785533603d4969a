#!/usr/bin/env python3
"""Generate the 123-bus restoration fixture.

Base feeder: the IEEE 123-node test feeder (segment lengths, line
configurations, spot loads) transcribed into the tables below. Regulators are
kept as fixed-ratio branches, the substation regulator becomes the breaker
150-149, and the tie stubs 251, 350, 451 and the 610 transformer are dropped.

On top of that: seven 300 kW / 250 kVAr DGs, eighteen extra sectionalizers
(each splits an existing segment and introduces a bus numbered 161-178), six
critical buses, fourteen damaged segments, six resource types, three depots
with ten crews. Travel times follow feeder distance.

Usage: make_ieee123.py [out.json]
"""

import json
import sys

import networkx as nx

# from, to, feet, config
SEGMENTS = """
1 2 175 10; 1 3 250 11; 1 7 300 1; 3 4 200 11; 3 5 325 11; 5 6 250 11
7 8 200 1; 8 12 225 10; 8 9 225 9; 8 13 300 1; 9 14 425 9; 13 34 150 11
13 18 825 2; 14 11 250 9; 14 10 250 9; 15 16 375 11; 15 17 350 11
18 19 250 9; 18 21 300 2; 19 20 325 9; 21 22 525 10; 21 23 250 2
23 24 550 11; 23 25 275 2; 25 26 350 7; 25 28 200 2; 26 27 275 7
26 31 225 11; 27 33 500 9; 28 29 300 2; 29 30 350 2; 30 250 200 2
31 32 300 11; 34 15 100 11; 35 36 650 8; 35 40 250 1; 36 37 300 9
36 38 250 10; 38 39 325 10; 40 41 325 11; 40 42 250 1; 42 43 500 10
42 44 200 1; 44 45 200 9; 44 47 250 1; 45 46 300 9; 47 48 150 4
47 49 250 4; 49 50 250 4; 50 51 250 4; 52 53 200 1; 53 54 125 1
54 55 275 1; 54 57 350 3; 55 56 275 1; 57 58 250 10; 57 60 750 3
58 59 250 10; 60 61 550 5; 60 62 250 12; 62 63 175 12; 63 64 350 12
64 65 425 12; 65 66 325 12; 67 68 200 9; 67 72 275 3; 67 97 250 3
68 69 275 9; 69 70 325 9; 70 71 275 9; 72 73 275 11; 72 76 200 3
73 74 350 11; 74 75 400 11; 76 77 400 6; 76 86 700 3; 77 78 100 6
78 79 225 6; 78 80 475 6; 80 81 475 6; 81 82 250 6; 81 84 675 11
82 83 250 6; 84 85 475 11; 86 87 450 6; 87 88 175 9; 87 89 275 6
89 90 225 10; 89 91 225 6; 91 92 300 11; 91 93 225 6; 93 94 275 9
93 95 300 6; 95 96 200 10; 97 98 275 3; 98 99 550 3; 99 100 300 3
100 450 800 3; 101 102 225 11; 101 105 275 3; 102 103 325 11
103 104 700 11; 105 106 225 10; 105 108 325 3; 106 107 575 10
108 109 450 9; 108 300 1000 3; 109 110 300 9; 110 111 575 9
110 112 125 9; 112 113 525 9; 113 114 325 9; 135 35 375 4; 149 1 400 1
152 52 400 1; 160 67 350 6; 197 101 250 3; 152 151 50 1
"""

REGULATORS = {("9", "14"), ("25", "26"), ("160", "67")}

# Feeder switches: from, to, config (zero-length in the source data).
SWITCHES = [("13", "152", 1), ("18", "135", 1), ("60", "160", 1), ("97", "197", 1),
            ("54", "94", 9), ("151", "300", 1)]

# Sectionalizers added by splitting a segment a-b at a new bus n. The switch
# sits on the `at` end, the remaining segment keeps the length.
SPLITS = [
    ("13", "18", "163", "13"), ("13", "34", "164", "13"), ("25", "28", "168", "28"),
    ("42", "44", "165", "44"), ("60", "62", "169", "60"), ("72", "76", "166", "72"),
    ("76", "77", "172", "77"), ("97", "98", "174", "97"), ("1", "3", "161", "1"),
    ("8", "9", "162", "8"), ("67", "68", "167", "67"), ("72", "73", "170", "72"),
    ("81", "84", "171", "81"), ("87", "89", "173", "87"), ("101", "105", "175", "101"),
    ("108", "109", "176", "108"), ("57", "58", "177", "57"), ("26", "31", "178", "26"),
]

# Spot loads, kW / kVAr per phase a, b, c.
LOADS = """
1 40 20 0 0 0 0; 2 0 0 20 10 0 0; 4 0 0 0 0 40 20; 5 0 0 0 0 20 10; 6 0 0 0 0 40 20
7 20 10 0 0 0 0; 9 40 20 0 0 0 0; 10 20 10 0 0 0 0; 11 40 20 0 0 0 0; 12 0 0 20 10 0 0
16 0 0 0 0 40 20; 17 0 0 0 0 20 10; 19 40 20 0 0 0 0; 20 40 20 0 0 0 0; 22 0 0 40 20 0 0
24 0 0 0 0 40 20; 28 40 20 0 0 0 0; 29 40 20 0 0 0 0; 30 0 0 0 0 40 20; 31 0 0 0 0 20 10
32 0 0 0 0 20 10; 33 40 20 0 0 0 0; 34 0 0 0 0 40 20; 35 40 20 0 0 0 0; 37 40 20 0 0 0 0
38 0 0 20 10 0 0; 39 0 0 20 10 0 0; 41 0 0 0 0 20 10; 42 20 10 0 0 0 0; 43 0 0 40 20 0 0
45 20 10 0 0 0 0; 46 20 10 0 0 0 0; 47 35 25 35 25 35 25; 48 70 50 70 50 70 50
49 35 25 70 50 35 20; 50 0 0 0 0 40 20; 51 20 10 0 0 0 0; 52 40 20 0 0 0 0; 53 40 20 0 0 0 0
55 20 10 0 0 0 0; 56 0 0 20 10 0 0; 58 0 0 20 10 0 0; 59 0 0 20 10 0 0; 60 20 10 0 0 0 0
62 0 0 0 0 40 20; 63 40 20 0 0 0 0; 64 0 0 75 35 0 0; 65 35 25 35 25 70 50; 66 0 0 0 0 75 35
68 20 10 0 0 0 0; 69 40 20 0 0 0 0; 70 20 10 0 0 0 0; 71 40 20 0 0 0 0; 73 0 0 0 0 40 20
74 0 0 0 0 40 20; 75 0 0 0 0 40 20; 76 105 80 70 50 70 50; 77 0 0 40 20 0 0; 79 40 20 0 0 0 0
80 0 0 40 20 0 0; 82 40 20 0 0 0 0; 83 0 0 0 0 20 10; 84 0 0 0 0 20 10; 85 0 0 0 0 40 20
86 0 0 20 10 0 0; 87 0 0 40 20 0 0; 88 40 20 0 0 0 0; 90 0 0 40 20 0 0; 92 0 0 0 0 40 20
94 40 20 0 0 0 0; 95 0 0 20 10 0 0; 96 0 0 20 10 0 0; 98 40 20 0 0 0 0; 99 0 0 40 20 0 0
100 0 0 0 0 40 20; 102 0 0 0 0 20 10; 103 0 0 0 0 40 20; 104 0 0 0 0 40 20; 106 0 0 40 20 0 0
107 0 0 40 20 0 0; 109 40 20 0 0 0 0; 111 20 10 0 0 0 0; 112 20 10 0 0 0 0; 113 40 20 0 0 0 0
114 20 10 0 0 0 0
"""

DG_BUSES = ["30", "49", "52", "64", "80", "97", "450"]
CRITICAL = {"30", "48", "49", "53", "65", "76"}

# Phase order of the conductor positions for the overhead configurations.
ORDER = {1: "abc", 2: "cab", 3: "bca", 4: "cba", 5: "bac", 6: "acb"}
Z1_R = [[0.4576, 0.1560, 0.1535], [0.1560, 0.4666, 0.1580], [0.1535, 0.1580, 0.4615]]
Z1_X = [[1.0780, 0.5017, 0.3849], [0.5017, 1.0482, 0.4236], [0.3849, 0.4236, 1.0651]]
Z12_R = [[1.5209, 0.5198, 0.4924], [0.5198, 1.5329, 0.5198], [0.4924, 0.5198, 1.5209]]
Z12_X = [[0.7521, 0.2775, 0.2157], [0.2775, 0.7162, 0.2775], [0.2157, 0.2775, 0.7521]]
SINGLE = {9: "a", 10: "b", 11: "c"}


def impedance(cfg):
    """Phase-frame r, x in ohm/mile and the phase string."""
    zero = [[0.0] * 3 for _ in range(3)]
    r, x = [row[:] for row in zero], [row[:] for row in zero]
    if cfg in ORDER:
        pos = {ph: i for i, ph in enumerate(ORDER[cfg])}
        for p in range(3):
            for q in range(3):
                r[p][q] = Z1_R[pos["abc"[p]]][pos["abc"[q]]]
                x[p][q] = Z1_X[pos["abc"[p]]][pos["abc"[q]]]
        return r, x, "abc"
    if cfg == 12:
        return Z12_R, Z12_X, "abc"
    if cfg == 7:
        r[0][0], r[0][2], r[2][0], r[2][2] = 0.4576, 0.1535, 0.1535, 0.4615
        x[0][0], x[0][2], x[2][0], x[2][2] = 1.0780, 0.3849, 0.3849, 1.0651
        return r, x, "ac"
    if cfg == 8:
        r[0][0], r[0][1], r[1][0], r[1][1] = 0.4576, 0.1535, 0.1535, 0.4615
        x[0][0], x[0][1], x[1][0], x[1][1] = 1.0780, 0.3849, 0.3849, 1.0651
        return r, x, "ab"
    ph = SINGLE[cfg]
    k = "abc".index(ph)
    r[k][k], x[k][k] = 1.3292, 1.3475
    return r, x, ph


def rounded(m):
    return [[round(v, 4) for v in row] for row in m]


DAMAGE = [
    # line, resources A-F, line-crew hours, tree-crew hours
    ("7-8", [1, 2, 0, 1, 0, 0], 2.5, None),
    ("15-17", [1, 2, 1, 1, 0, 0], 1.25, 1.0),
    ("18-19", [1, 2, 1, 1, 0, 0], 0.5, None),
    ("27-33", [1, 2, 1, 1, 0, 0], 2.25, None),
    ("38-39", [1, 2, 1, 1, 0, 0], 1.0, 0.75),
    ("54-57", [0, 2, 0, 1, 2, 0], 0.75, None),
    ("58-59", [1, 2, 1, 1, 0, 0], 0.5, None),
    ("18-163", [0, 2, 0, 1, 0, 2], 1.75, None),
    ("67-72", [0, 2, 0, 1, 0, 0], 4.0, 1.25),
    ("76-86", [1, 2, 1, 1, 0, 0], 6.0, 2.0),
    ("91-93", [0, 2, 0, 1, 2, 0], 1.5, None),
    ("93-95", [1, 2, 1, 1, 0, 0], 2.75, None),
    ("105-106", [1, 2, 1, 1, 0, 0], 1.75, 1.0),
    ("113-114", [1, 2, 1, 1, 0, 0], 0.75, 0.5),
]

DEPOTS = {"DP1": "150", "DP2": "60", "DP3": "101"}
LINE_CREWS = [("L1", "DP1"), ("L2", "DP1"), ("L3", "DP2"), ("L4", "DP2"), ("L5", "DP3"), ("L6", "DP3")]
TREE_CREWS = [("T1", "DP1"), ("T2", "DP2"), ("T3", "DP2"), ("T4", "DP3")]


def build():
    segs = []
    for item in SEGMENTS.replace("\n", ";").split(";"):
        if item.strip():
            a, b, ft, cfg = item.split()
            segs.append([a, b, int(ft) / 5280.0, int(cfg)])

    lines = []  # dicts in output order
    split_at = {(a, b): (n, at) for a, b, n, at in SPLITS}

    def add(frm, to, miles, cfg, kind="plain", lid=None):
        r, x, ph = impedance(cfg)
        d = {"from": frm, "to": to}
        if lid:
            d["id"] = lid
        if ph != "abc":
            d["phases"] = ph
        if kind != "plain":
            d["kind"] = kind
        d.update({"r": rounded(r), "x": rounded(x), "length": round(miles, 6), "p_max_kw": 2000, "q_max_kvar": 2000})
        lines.append(d)

    add("150", "149", 0.001, 1, "breaker")
    for a, b, miles, cfg in segs:
        kind = "regulator" if (a, b) in REGULATORS else "plain"
        if (a, b) in split_at:
            n, at = split_at[(a, b)]
            other = b if at == a else a
            add(at, n, 0.001, cfg, "switch", f"{at}-{n}")
            add(n, other, miles, cfg, kind, "18-163" if n == "163" else None)
        else:
            add(a, b, miles, cfg, kind)
    for a, b, cfg in SWITCHES:
        add(a, b, 0.001, cfg, "switch")

    phases = {}
    for d in lines:
        for bus in (d["from"], d["to"]):
            phases.setdefault(bus, set()).update(d.get("phases", "abc"))

    loads = {}
    for item in LOADS.replace("\n", ";").split(";"):
        if item.strip():
            v = item.split()
            loads[v[0]] = [float(t) for t in v[1:]]

    buses = []
    order = ["150"] + sorted((b for b in phases if b != "150"), key=int)
    for bid in order:
        ph = "".join(p for p in "abc" if p in phases[bid])
        b = {"id": bid}
        if ph != "abc":
            b["phases"] = ph
        if bid == "150":
            b.update({"substation": True, "dg_p_kw": [5000] * 3, "dg_q_kvar": [5000] * 3})
        if bid in loads:
            v = loads[bid]
            p, q = [v[0], v[2], v[4]], [v[1], v[3], v[5]]
            for k in range(3):
                if (p[k] or q[k]) and "abc"[k] not in ph:
                    raise SystemExit(f"load on missing phase at bus {bid}")
            b["p_kw"], b["q_kvar"] = p, q
        if bid in DG_BUSES:
            if ph != "abc":
                raise SystemExit(f"DG bus {bid} is not three-phase")
            b["dg_p_kw"], b["dg_q_kvar"] = [100.0] * 3, [round(250 / 3, 4)] * 3
        if bid in CRITICAL:
            b["critical"] = True
        buses.append(b)

    g = nx.Graph()
    for d in lines:
        g.add_edge(d["from"], d["to"], w=d["length"])
    dist = dict(nx.all_pairs_dijkstra_path_length(g, weight="w"))
    ends = {lid: lid.split("-") for lid, *_ in DAMAGE}
    where = {**{k: [v] for k, v in DEPOTS.items()}, **ends}
    nodes = [lid for lid, *_ in DAMAGE] + list(DEPOTS)

    def hours(u, v):
        if u == v:
            return 0.0
        miles = min(dist[a][b] for a in where[u] for b in where[v])
        return round(0.25 + miles / 2.0, 2)

    travel = [[hours(u, v) for v in nodes] for u in nodes]

    damage = []
    for lid, res, lh, th in DAMAGE:
        d = {"line": lid, "repair_hours": {c: lh for c, _ in LINE_CREWS}, "resources": res}
        if th is not None:
            d["tree_hours"] = {c: th for c, _ in TREE_CREWS}
        damage.append(d)

    crews = [{"id": c, "kind": "line", "depot": w, "capacity": 30} for c, w in LINE_CREWS]
    crews += [{"id": c, "kind": "tree", "depot": w} for c, w in TREE_CREWS]

    return {
        "params": {
            "dt_hours": 1, "horizon": 16, "clpu_hours": 1, "switch_cost": 8, "shed_cost": 14,
            "resource_names": list("ABCDEF"), "resource_weights": [3, 2.5, 2, 1, 4, 1],
            "impedance_unit": "ohm_per_length", "base_kv": 2.4017771, "base_kva": 1000,
            "initially_open": ["151-300", "54-94"],
        },
        "network": {"buses": buses, "lines": lines},
        "damage": damage,
        "crews": crews,
        "depots": [{"id": w, "stock": [10, 20, 10, 12, 4, 2]} for w in DEPOTS],
        "travel": {"nodes": nodes, "hours": travel},
    }


if __name__ == "__main__":
    doc = build()
    text = json.dumps(doc, indent=1) + "\n"
    if len(sys.argv) > 1:
        with open(sys.argv[1], "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
