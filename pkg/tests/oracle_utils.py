"""Brute-force oracles shared by the metric tests and the acceptance suite.

Everything here is written as plain double loops over raw definitions,
independent of the vectorized implementations it checks.
"""

import math


def cosine_distance(a, b):
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if na == 0.0 and nb == 0.0:
        return 0.0
    if na == 0.0 or nb == 0.0:
        return 1.0
    dot = sum(x * y for x, y in zip(a, b))
    return 1.0 - dot / (na * nb)


def brute_force_fps(points, k, start):
    chosen = [start]
    while len(chosen) < k:
        best_idx, best_dist = None, -1.0
        for i in range(len(points)):
            d = min(cosine_distance(points[i], points[j]) for j in chosen)
            if d > best_dist:
                best_idx, best_dist = i, d
        chosen.append(best_idx)
    return chosen


def brute_force_covering_radius(points, rep_indices):
    radius = 0.0
    for p in points:
        nearest = min(cosine_distance(p, points[r]) for r in rep_indices)
        radius = max(radius, nearest)
    return radius


def brute_force_j1(parent_ids):
    """Subtree-entropy balance straight from its definition."""
    n = len(parent_ids)
    children = {i: [] for i in range(n)}
    for i, p in enumerate(parent_ids):
        if p is not None:
            children[p].append(i)

    def subtree_size(node):
        return 1 + sum(subtree_size(c) for c in children[node])

    weighted, total = 0.0, 0.0
    for node in range(n):
        kids = children[node]
        if len(kids) < 2:
            continue
        sizes = [subtree_size(c) for c in kids]
        s = sum(sizes)
        entropy = -sum((x / s) * math.log(x / s) for x in sizes) / math.log(len(kids))
        weighted += subtree_size(node) * entropy
        total += subtree_size(node)
    return weighted / total if total else 0.0
