import math


def check(instance, solution, objective):
    em, cl, k = instance["emitters"], instance["clients"], instance["K"]
    if not isinstance(solution, list) or len(set(solution)) != len(solution):
        return False
    if any(not isinstance(j, int) or j < 0 or j >= len(em) for j in solution):
        return False
    for c in cl:
        hits = sum(1 for j in solution if math.hypot(em[j]["x"] - c["x"], em[j]["y"] - c["y"]) <= em[j]["r"] + 1e-9)
        if hits < k + 1:
            return False
    cost = sum(em[j]["cost"] for j in solution)
    return abs(cost - objective) <= 1e-6 * max(1.0, abs(cost))
