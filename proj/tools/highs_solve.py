#!/usr/bin/env python3
"""Solve a gridmend LP file with HiGHS (through scipy) and write a solution file.

usage: highs_solve.py MODEL.lp SOLUTION.sol [TIME_LIMIT_S]
"""
import math
import sys

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import csr_matrix


def parse_number(tok):
    if tok in ("inf", "+inf"):
        return math.inf
    if tok == "-inf":
        return -math.inf
    return float(tok)


def parse_expr(tokens):
    """'3 x - 1.5 y + 10' -> ({name: coef}, constant)."""
    terms, const = {}, 0.0
    i, sign = 0, 1.0
    while i < len(tokens):
        t = tokens[i]
        if t in ("+", "-"):
            sign = 1.0 if t == "+" else -1.0
            i += 1
            continue
        value = parse_number(t)
        if i + 1 < len(tokens) and tokens[i + 1] not in ("+", "-"):
            name = tokens[i + 1]
            terms[name] = terms.get(name, 0.0) + sign * value
            i += 2
        else:
            const += sign * value
            i += 1
        sign = 1.0
    return terms, const


def read_lp(path):
    names, index = [], {}
    obj, const = {}, 0.0
    rows, binaries, bounds = [], set(), {}
    section = None
    with open(path) as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if not line.startswith(" "):
                section = line.strip()
                continue
            body = line.strip()
            if section == "minimize":
                terms, const = parse_expr(body.split(":", 1)[1].split())
                obj = terms
            elif section == "subject to":
                name, rest = body.split(":", 1)
                toks = rest.split()
                for op in ("<=", ">=", "="):
                    if op in toks:
                        k = toks.index(op)
                        break
                terms, _ = parse_expr(toks[:k])
                rows.append((name, terms, toks[k], parse_number(toks[k + 1])))
            elif section == "bounds":
                toks = body.split()
                if len(toks) == 3 and toks[1] == "=":
                    v = parse_number(toks[2])
                    bounds[toks[0]] = (v, v)
                    var = toks[0]
                else:
                    var = toks[2]
                    bounds[var] = (parse_number(toks[0]), parse_number(toks[4]))
                if var not in index:
                    index[var] = len(names)
                    names.append(var)
            elif section == "binary":
                binaries.add(body)
    return names, index, obj, const, rows, binaries, bounds


def main():
    lp_path, sol_path = sys.argv[1], sys.argv[2]
    time_limit = float(sys.argv[3]) if len(sys.argv) > 3 else 60.0
    names, index, obj, const, rows, binaries, bounds = read_lp(lp_path)
    n = len(names)
    c = np.zeros(n)
    for name, v in obj.items():
        c[index[name]] = v
    lo = np.array([bounds[v][0] for v in names])
    hi = np.array([bounds[v][1] for v in names])
    integrality = np.array([1 if v in binaries else 0 for v in names])
    data, ri, ci, rlo, rhi = [], [], [], [], []
    for r, (_, terms, op, rhs) in enumerate(rows):
        for name, v in terms.items():
            data.append(v)
            ri.append(r)
            ci.append(index[name])
        rlo.append(rhs if op in (">=", "=") else -math.inf)
        rhi.append(rhs if op in ("<=", "=") else math.inf)
    constraints = []
    if rows:
        a = csr_matrix((data, (ri, ci)), shape=(len(rows), n))
        constraints.append(LinearConstraint(a, rlo, rhi))
    res = milp(c, constraints=constraints, integrality=integrality, bounds=Bounds(lo, hi),
               options={"time_limit": time_limit, "mip_rel_gap": 0.0})
    with open(sol_path, "w") as out:
        if res.x is None:
            status = "infeasible" if res.status == 2 else "time-limit" if res.status == 1 else "error"
            out.write(f"status {status}\nobj inf\n")
            return
        x = np.array(res.x)
        x[integrality == 1] = np.round(x[integrality == 1])
        status = "optimal" if res.status == 0 else "feasible"
        out.write(f"status {status}\nobj {repr(float(c @ x + const))}\n")
        for name, v in zip(names, x):
            if v != 0.0:
                out.write(f"{name} {repr(float(v))}\n")


if __name__ == "__main__":
    main()
