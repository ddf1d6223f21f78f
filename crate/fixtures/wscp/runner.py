"""Runs a candidate script under the solve/test protocol.

    python3 runner.py solve <path>   stdin {"instance": ...}          stdout: one report line
    python3 runner.py test <path>    stdin {"instance", "solution", "objective"}   stdout: true/false

Any exception exits nonzero.
"""
import importlib.util
import json
import sys


def load(path):
    spec = importlib.util.spec_from_loader("candidate", loader=None)
    module = importlib.util.module_from_spec(spec)
    with open(path) as fh:
        code = compile(fh.read(), path, "exec")
    exec(code, module.__dict__)
    return module


def main(argv):
    if len(argv) != 3 or argv[1] not in ("solve", "test"):
        print("usage: runner.py solve|test <component>", file=sys.stderr)
        return 2
    role, path = argv[1], argv[2]
    payload = json.loads(sys.stdin.read())
    module = load(path)
    if role == "solve":
        report = module.solve(payload["instance"])
        sys.stdout.write(json.dumps(report) + "\n")
    else:
        verdict = module.check(payload["instance"], payload.get("solution"), payload.get("objective"))
        if isinstance(verdict, bool):
            sys.stdout.write("true\n" if verdict else "false\n")
        else:
            sys.stdout.write(str(verdict) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
