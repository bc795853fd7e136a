"""Scorer for the bundled toy seed; speaks the GE_METRICS protocol.

Usage: python -m evoblocks.toy.evaluate <workdir>

Reads model.py from the rendered workdir, parses the four coefficient
assignments, and prints one metrics line with the mean squared error over the
committed dataset, the count of non-zero coefficients, and a negated-error
convenience objective for maximize-direction configs. A malformed or missing
coefficient exits 1. No clock, no randomness: output is a pure function of
the rendered bytes.
"""

from __future__ import annotations

import json
import re
import sys
from pathlib import Path

from . import COEFFICIENTS, dataset_path


def parse_coefficients(text: str) -> dict[str, float]:
    coeffs: dict[str, float] = {}
    for name in COEFFICIENTS:
        matches = re.findall(
            rf"^\s*{name}\s*=\s*([^#\n]+?)\s*(?:#.*)?$", text, flags=re.MULTILINE
        )
        if len(matches) != 1:
            raise ValueError(f"expected exactly one assignment of {name}, found {len(matches)}")
        try:
            coeffs[name] = float(matches[0])
        except ValueError:
            raise ValueError(f"{name} is not numeric: {matches[0]!r}") from None
    return coeffs


def score(coeffs: dict[str, float]) -> dict[str, float]:
    data = json.loads(dataset_path().read_text(encoding="utf-8"))
    xs, ys = data["x"], data["y"]
    c0, c1, c2, c3 = (coeffs[n] for n in COEFFICIENTS)
    total = 0.0
    for x, y in zip(xs, ys):
        pred = c0 + c1 * x + c2 * x * x + c3 * x * x * x
        total += (y - pred) ** 2
    mse = total / len(xs)
    return {
        "fit_error": mse,
        "complexity_count": sum(1 for v in coeffs.values() if v != 0.0),
        "neg_fit_error": -mse,
    }


def main(argv: list[str]) -> int:
    if len(argv) != 1:
        print("usage: python -m evoblocks.toy.evaluate <workdir>", file=sys.stderr)
        return 2
    model = Path(argv[0]) / "model.py"
    try:
        coeffs = parse_coefficients(model.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        print(f"toy evaluate: {exc}", file=sys.stderr)
        return 1
    print("GE_METRICS: " + json.dumps({"objectives": score(coeffs)}))
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
