"""Line-delimited JSON evaluator for (x - 0.6)^2 on [-2, 2].

Reads one request per line on stdin and answers on stdout:
    {"id": 3, "location": [0.1], "operators": ["value", "grad:0"]}
    {"id": 3, "values": [0.25, -1.0]}
"""

import json
import sys


def answer(request):
    d = request["location"][0] - 0.6
    values = []
    for op in request["operators"]:
        if op == "value":
            values.append(d * d)
        elif op == "grad:0":
            values.append(2.0 * d)
        else:
            return {"id": request["id"], "error": f"unsupported operator {op}"}
    return {"id": request["id"], "values": values}


def main():
    for line in sys.stdin:
        if line.strip():
            print(json.dumps(answer(json.loads(line))), flush=True)


if __name__ == "__main__":
    main()
