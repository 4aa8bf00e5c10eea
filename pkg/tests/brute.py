"""Independent brute-force oracles: plain Python loops, no library internals.

Everything here recomputes descriptor values from first principles so the
vectorized implementations have something honest to be checked against.
"""

import math

_OFFSETS = {
    4: ((-1, 0), (1, 0), (0, -1), (0, 1)),
    8: ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)),
}


def moment_bf(weights, height, width, p, q):
    """Weighted coordinate-power sum; weights is a flat row-major list."""
    total = 0.0
    for x in range(height):
        for y in range(width):
            total += weights[x * width + y] * (x**p) * (y**q)
    return total


def volume_bf(labels, height, width, k):
    return sum(1 for v in labels if v == k)


def centroid_bf(labels, height, width, k):
    xs, ys, n = 0.0, 0.0, 0
    for x in range(height):
        for y in range(width):
            if labels[x * width + y] == k:
                xs += x
                ys += y
                n += 1
    if n == 0:
        return None
    return xs / n, ys / n


def spread_bf(labels, height, width, k):
    """Population standard deviation of foreground coordinates per axis."""
    cen = centroid_bf(labels, height, width, k)
    if cen is None:
        return None
    cx, cy = cen
    vx, vy, n = 0.0, 0.0, 0
    for x in range(height):
        for y in range(width):
            if labels[x * width + y] == k:
                vx += (x - cx) ** 2
                vy += (y - cy) ** 2
                n += 1
    return math.sqrt(vx / n), math.sqrt(vy / n)


def length_bf(labels, height, width, k, connectivity):
    """Count of unordered neighbor pairs crossing the class-k boundary."""
    crossings = 0
    for x in range(height):
        for y in range(width):
            inside = labels[x * width + y] == k
            for dx, dy in _OFFSETS[connectivity]:
                nx, ny = x + dx, y + dy
                if not (0 <= nx < height and 0 <= ny < width):
                    continue
                if inside != (labels[nx * width + ny] == k):
                    crossings += 1
    return crossings // 2  # every crossing pair was seen from both ends


def soft_length_bf(weights, height, width, connectivity):
    """Sum of |w_i - w_j| over unordered neighbor pairs, naive enumeration."""
    total = 0.0
    for x in range(height):
        for y in range(width):
            i = x * width + y
            for dx, dy in _OFFSETS[connectivity]:
                nx, ny = x + dx, y + dy
                if not (0 <= nx < height and 0 <= ny < width):
                    continue
                j = nx * width + ny
                if i < j:
                    total += abs(weights[i] - weights[j])
    return total


def edge_list_bf(height, width, connectivity):
    """All unordered neighbor pairs (i, j), i < j."""
    edges = set()
    for x in range(height):
        for y in range(width):
            i = x * width + y
            for dx, dy in _OFFSETS[connectivity]:
                nx, ny = x + dx, y + dy
                if 0 <= nx < height and 0 <= ny < width:
                    j = nx * width + ny
                    edges.add((min(i, j), max(i, j)))
    return sorted(edges)
