#!/usr/bin/env python3
"""Persistent MILP worker.

Reads one JSON request per line on stdin, solves it with scipy's HiGHS
interface, and writes one JSON response per line on stdout. Keeping the
process alive across solves amortizes the scipy import cost.

Request schema:
  {"maximize": bool,
   "obj":  [[col, coef], ...],
   "cols": [[lb, ub, integrality], ...],      # integrality: 0 cont, 1 int
   "rows": [{"terms": [[col, coef], ...], "sense": "<="|">="|"=", "rhs": f}],
   "time_limit": seconds, "mip_rel_gap": f}

Response schema:
  {"status": "optimal"|"feasible"|"infeasible"|"no_incumbent"|"error",
   "objective": f, "x": [f, ...], "detail": str}

Bounds use 1e30 as the infinity sentinel (JSON has no Infinity literal).
"""
import json
import sys

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, milp

INF_SENTINEL = 1e29


def _bound(v):
    if v >= INF_SENTINEL:
        return np.inf
    if v <= -INF_SENTINEL:
        return -np.inf
    return v


def solve(req):
    cols = req["cols"]
    n = len(cols)
    lb = np.array([_bound(c[0]) for c in cols], dtype=float)
    ub = np.array([_bound(c[1]) for c in cols], dtype=float)
    integrality = np.array([c[2] for c in cols], dtype=np.uint8)

    c = np.zeros(n)
    for i, v in req.get("obj", []):
        c[i] += v
    maximize = bool(req.get("maximize", True))
    if maximize:
        c = -c

    constraints = []
    rows = req.get("rows", [])
    if rows:
        data, ri, ci, lo, hi = [], [], [], [], []
        for k, row in enumerate(rows):
            for i, v in row["terms"]:
                ri.append(k)
                ci.append(i)
                data.append(v)
            sense, rhs = row["sense"], float(row["rhs"])
            if sense == "<=":
                lo.append(-np.inf)
                hi.append(rhs)
            elif sense == ">=":
                lo.append(rhs)
                hi.append(np.inf)
            else:
                lo.append(rhs)
                hi.append(rhs)
        mat = sparse.csr_matrix((data, (ri, ci)), shape=(len(rows), n))
        constraints = [LinearConstraint(mat, np.array(lo), np.array(hi))]

    options = {
        "time_limit": float(req.get("time_limit", 1e30)),
        "mip_rel_gap": float(req.get("mip_rel_gap", 0.0)),
        "presolve": True,
    }
    res = milp(c=c, constraints=constraints, integrality=integrality,
               bounds=Bounds(lb, ub), options=options)

    out = {}
    # res.status: 0 optimal, 1 iteration/time limit, 2 infeasible,
    #             3 unbounded, 4 other
    if res.status == 0:
        out["status"] = "optimal"
    elif res.status == 1:
        out["status"] = "feasible" if res.x is not None else "no_incumbent"
    elif res.status == 2:
        out["status"] = "infeasible"
    else:
        out["status"] = "error"
        out["detail"] = str(res.message)
    if res.x is not None:
        out["objective"] = float(-res.fun if maximize else res.fun)
        out["x"] = [float(v) for v in res.x]
    return out


def main():
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        if line == "quit":
            break
        try:
            out = solve(json.loads(line))
        except Exception as exc:  # noqa: BLE001 - keep the worker alive
            out = {"status": "error", "detail": f"{type(exc).__name__}: {exc}"}
        sys.stdout.write(json.dumps(out) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
