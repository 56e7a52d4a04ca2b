"""Independent oracle for the sphere-panel derived values.

Recomputes panel counts, total areas and mesh widths with a separate
scalar (non-vectorized) subdivision routine so the expected values frozen
into the tests do not depend on the library implementation.  Run directly
to print the table.
"""

import math


def icosahedron():
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    raw = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    verts = []
    for x, y, z in raw:
        r = math.sqrt(x * x + y * y + z * z)
        verts.append((x / r, y / r, z / r))
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    return [[verts[i] for i in f] for f in faces]


def normalize(p):
    r = math.sqrt(sum(c * c for c in p))
    return tuple(c / r for c in p)


def midpoint(a, b):
    return normalize(tuple(0.5 * (x + y) for x, y in zip(a, b)))


def subdivide(tris):
    out = []
    for a, b, c in tris:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    return out


def tri_area(a, b, c):
    u = tuple(b[i] - a[i] for i in range(3))
    v = tuple(c[i] - a[i] for i in range(3))
    cx = u[1] * v[2] - u[2] * v[1]
    cy = u[2] * v[0] - u[0] * v[2]
    cz = u[0] * v[1] - u[1] * v[0]
    return 0.5 * math.sqrt(cx * cx + cy * cy + cz * cz)


def edge_len(a, b):
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


def main():
    # analytic icosahedron surface area for circumradius 1:
    # edge a = 4 / sqrt(10 + 2*sqrt(5)), area = 5*sqrt(3)*a^2
    a2 = 16.0 / (10.0 + 2.0 * math.sqrt(5.0))
    print(f"analytic icosahedron area: {5.0 * math.sqrt(3.0) * a2:.12f}")
    print(f"sphere area 4*pi:          {4.0 * math.pi:.12f}")
    tris = icosahedron()
    for r in range(5):
        area = sum(tri_area(*t) for t in tris)
        h = max(
            max(edge_len(t[0], t[1]), edge_len(t[1], t[2]), edge_len(t[2], t[0]))
            for t in tris
        )
        cmin = cmax = None
        for t in tris:
            c = tuple(sum(v[i] for v in t) / 3.0 for i in range(3))
            rc = math.sqrt(sum(x * x for x in c))
            cmin = rc if cmin is None else min(cmin, rc)
            cmax = rc if cmax is None else max(cmax, rc)
        print(
            f"r={r} n={len(tris):6d} area={area:.9f} "
            f"rel_gap_4pi={(4*math.pi-area)/(4*math.pi):.6f} h={h:.6f} "
            f"centroid_norm=[{cmin:.6f}, {cmax:.6f}]"
        )
        tris = subdivide(tris)


if __name__ == "__main__":
    main()
