#!/usr/bin/env python3
"""Regenerate golden/credit_norms.json: shared (delta, q, norm) vectors that
the service validator and the browser credit meter must agree on.

Expected norms are computed here with plain sum-of-powers arithmetic,
independent of either implementation under test.
"""

import json
import math
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "golden" / "credit_norms.json"


def plain_norm(delta, q):
    if q == "inf":
        return max(abs(x) for x in delta)
    q = float(q)
    return sum(abs(x) ** q for x in delta) ** (1.0 / q)


def main():
    cases = [
        # classics and the slider-panel examples
        {"delta": [3.0, 4.0], "q": 2},
        {"delta": [3.0, -4.0], "q": 1},
        {"delta": [3.0, -4.0], "q": "inf"},
        {"delta": [10.0, 0.0, 0.0, 0.0], "q": "inf"},
        {"delta": [6.0, -5.0, 0.0, 0.0], "q": 1},
        {"delta": [3.0, 4.0, 0.0, 0.0], "q": 2},
        {"delta": [0.0, 0.0], "q": 2},
        {"delta": [-7.5], "q": 1},
    ]
    rng = random.Random(20170501)
    for _ in range(48):
        dim = rng.randint(2, 6)
        q = rng.choice([1, 2, "inf", 1.5, 3])
        delta = [round(rng.uniform(-50, 50), 6) for _ in range(dim)]
        cases.append({"delta": delta, "q": q})
    for c in cases:
        c["expected"] = plain_norm(c["delta"], c["q"])
    OUT.parent.mkdir(exist_ok=True)
    OUT.write_text(json.dumps(cases, indent=1) + "\n")
    print(f"wrote {len(cases)} cases to {OUT}")


if __name__ == "__main__":
    main()
