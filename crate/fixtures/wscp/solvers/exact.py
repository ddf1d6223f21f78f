import itertools
import math


def covers(e, c):
    return math.hypot(e["x"] - c["x"], e["y"] - c["y"]) <= e["r"] + 1e-9


def solve(instance):
    em, cl, k = instance["emitters"], instance["clients"], instance["K"]
    best = None
    for size in range(len(em) + 1):
        for sel in itertools.combinations(range(len(em)), size):
            if all(sum(covers(em[j], c) for j in sel) >= k + 1 for c in cl):
                cost = sum(em[j]["cost"] for j in sel)
                if best is None or cost < best[0]:
                    best = (cost, list(sel))
    if best is None:
        return {"status": "INFEASIBLE"}
    return {"status": "OPTIMAL", "objective": best[0], "solution": best[1]}
