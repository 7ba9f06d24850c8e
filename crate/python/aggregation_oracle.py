#!/usr/bin/env python3
"""Brute-force aggregation of per-site count ratios.

Reads a JSON list of instances from stdin; each instance is a list of
[correct, n] pairs. Prints one object per instance with `pooled`, `min`,
`max` and `unweighted` as float repr strings, so no precision is lost
in transit.
"""
import json
import math
import sys


def aggregate(sites):
    values = [c / n for c, n in sites]
    pooled = sum(c for c, _ in sites) / sum(n for _, n in sites)
    return {
        "pooled": repr(pooled),
        "min": repr(sorted(values)[0]),
        "max": repr(sorted(values)[-1]),
        "unweighted": repr(math.fsum(values) / len(values)),
    }


def main():
    instances = json.load(sys.stdin)
    json.dump([aggregate(s) for s in instances], sys.stdout)


if __name__ == "__main__":
    main()
