"""Standalone re-implementation of the refbench data path.

Shares no code with the Rust crates: it regenerates each site from its
config, applies the fixed preparation constants, scores the published
linear weights and counts confusion cells.

    python3 refbench_oracle.py SEED:N:SHIFT[:NOISE] ...

prints one JSON document with per-site and pooled numbers.
"""

import json
import sys

MASK = (1 << 64) - 1
PRIOR = 0.4
CLASS_MEAN = 0.75
SHIFT_DIRECTION = [2.0, -1.5, 1.0, 0.5]
CENTER = [0.0, 0.0, 0.0, 0.0]
SCALE = [1.25, 1.25, 1.25, 1.25]
WEIGHTS = [0.9, 0.7, 0.5, 0.3]
BIAS = -0.25


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def uniform(self):
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def gaussian(self):
        s = 0.0
        for _ in range(12):
            s += self.uniform()
        return s - 6.0


def generate(seed, n, shift, noise=0.0):
    rng = SplitMix64(seed)
    rows, labels = [], []
    for _ in range(n):
        positive = rng.uniform() < PRIOR
        mean = CLASS_MEAN if positive else -CLASS_MEAN
        row = [mean + rng.gaussian() + shift * SHIFT_DIRECTION[j] for j in range(4)]
        flip = rng.uniform() < noise
        rows.append(row)
        labels.append(int(positive != flip))
    return rows, labels


def through_text(x):
    return float("%.6f" % x)


def prepare(rows):
    raw = [[through_text(v) for v in row] for row in rows]
    return [[through_text((v - CENTER[j]) / SCALE[j]) for j, v in enumerate(row)] for row in raw]


def linear(prepared):
    out = []
    for row in prepared:
        s = BIAS
        for j in range(4):
            s += WEIGHTS[j] * row[j]
        out.append(1 if s > 0.0 else 0)
    return out


def confusion(preds, labels):
    c = {"tp": 0, "fp": 0, "fn": 0, "tn": 0}
    for p, l in zip(preds, labels):
        key = ("tp" if l else "fp") if p else ("fn" if l else "tn")
        c[key] += 1
    return c


def site_report(seed, n, shift, noise=0.0):
    rows, labels = generate(seed, n, shift, noise)
    prepared = prepare(rows)
    models = {"majority": [0] * n, "linear": linear(prepared)}
    return {
        "n": n,
        "positive_fraction": sum(labels) / n,
        "feature_means": [sum(r[j] for r in rows) / n for j in range(4)],
        "confusion": {name: confusion(p, labels) for name, p in models.items()},
    }


def main(argv):
    sites = []
    for spec in argv:
        parts = spec.split(":")
        seed, n, shift = int(parts[0]), int(parts[1]), float(parts[2])
        noise = float(parts[3]) if len(parts) > 3 else 0.0
        sites.append(site_report(seed, n, shift, noise))
    pooled = {}
    for name in ("majority", "linear"):
        correct = sum(s["confusion"][name]["tp"] + s["confusion"][name]["tn"] for s in sites)
        total = sum(s["n"] for s in sites)
        pooled[name] = correct / total
    json.dump({"sites": sites, "pooled_accuracy": pooled}, sys.stdout)
    print()


if __name__ == "__main__":
    main(sys.argv[1:])
