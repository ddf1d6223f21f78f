def solve(instance):
    return {"status": "INFEASIBLE"}
