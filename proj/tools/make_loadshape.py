"""Writes the shipped 1-minute daily loadshape (deterministic)."""
import math
import random
import sys


def profile(minute: int) -> float:
    h = minute / 60.0
    base = 0.55
    morning = 0.25 * math.exp(-((h - 8.0) / 2.0) ** 2)
    evening = 0.45 * math.exp(-((h - 19.0) / 2.5) ** 2)
    midday = 0.10 * math.exp(-((h - 13.0) / 3.0) ** 2)
    return base + morning + evening + midday


def main() -> None:
    out = sys.argv[1] if len(sys.argv) > 1 else "data/daily_1min.csv"
    rng = random.Random(7)
    with open(out, "w", newline="\n") as f:
        f.write("minute,multiplier\n")
        for m in range(1440):
            f.write(f"{m},{profile(m) * (1.0 + rng.gauss(0.0, 0.01)):.4f}\n")


if __name__ == "__main__":
    main()
