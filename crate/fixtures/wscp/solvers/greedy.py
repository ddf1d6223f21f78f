import math


def solve(instance):
    em, cl, k = instance["emitters"], instance["clients"], instance["K"]
    cov = [[math.hypot(e["x"] - c["x"], e["y"] - c["y"]) <= e["r"] + 1e-9 for c in cl] for e in em]
    missing = [k + 1] * len(cl)
    chosen = []
    while any(missing):
        pick = None
        for j, e in enumerate(em):
            if j in chosen:
                continue
            gain = sum(1 for i in range(len(cl)) if missing[i] and cov[j][i])
            if gain and (pick is None or e["cost"] / gain < pick[0]):
                pick = (e["cost"] / gain, j)
        if pick is None:
            return {"status": "INFEASIBLE"}
        chosen.append(pick[1])
        for i in range(len(cl)):
            if missing[i] and cov[pick[1]][i]:
                missing[i] -= 1
    chosen.sort()
    return {"status": "TIME_LIMIT", "objective": sum(em[j]["cost"] for j in chosen), "solution": chosen}
