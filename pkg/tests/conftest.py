import numpy as np
import pytest

import printct as pc

# Void-size ladder shared by detectability tests: generous clearances so
# only feature size (not packing) decides what survives degradation.
LADDER_SIZES = [0.2, 0.25, 0.3, 0.35, 0.4, 0.5, 0.6, 0.8, 1.0]
LADDER_COUNTS = [6, 6, 5, 5, 5, 4, 4, 4, 4]


def ladder_phantom() -> pc.PhantomSpec:
    W = 6.0
    voids = []
    z = 13.0 - 0.8
    for size, cnt in zip(LADDER_SIZES[::-1], LADDER_COUNTS[::-1]):
        gap = 0.5 if size < 0.4 else 1.0
        m = max(2, int((W - 1.6) // (size + gap)))
        span = m * size + (m - 1) * gap
        start = (W - span) / 2 + size / 2
        xs = [start + i * (size + gap) for i in range(m)]
        z -= size / 2
        placed = 0
        for x in xs:
            for y in xs:
                if placed < cnt:
                    voids.append(pc.VoidSpec("cube" if placed % 2 else "sphere",
                                             size, (x, y, z)))
                    placed += 1
        z -= size / 2 + (0.45 if size < 0.4 else 0.7)
    return pc.PhantomSpec((W, W, 13.0), tuple(voids), label="ladder")


def block_phantom(dims=(4.0, 4.0, 4.0), voids=()) -> pc.PhantomSpec:
    return pc.PhantomSpec(dims, tuple(voids), label="block")


@pytest.fixture(scope="session")
def ladder_spec():
    return ladder_phantom()


@pytest.fixture(scope="session")
def sample1():
    return pc.sample1_spec(0.145)


@pytest.fixture(scope="session")
def sample2():
    return pc.sample2_spec(0.148)


def brute_force_voxel_labels(spec: pc.PhantomSpec, spacing: float,
                             margin: float = 0.0) -> np.ndarray:
    """Independent center-membership rasterizer (plain loops, half-open cubes)."""
    import math
    dims = [int(math.ceil((d + 2 * margin) / spacing - 1e-9))
            for d in spec.outer_dims_mm]
    lab = np.zeros(dims, dtype=np.uint8)
    for i in range(dims[0]):
        for j in range(dims[1]):
            for k in range(dims[2]):
                c = [-margin + (n + 0.5) * spacing for n in (i, j, k)]
                if not all(0 <= c[a] < spec.outer_dims_mm[a] for a in range(3)):
                    continue
                lab[i, j, k] = pc.MATERIAL
                for v in spec.voids:
                    lo, hi = v.bbox
                    if v.shape == "cube":
                        inside = all(lo[a] <= c[a] < hi[a] for a in range(3))
                    else:
                        inside = sum((c[a] - v.center_mm[a]) ** 2
                                     for a in range(3)) < (v.size_mm / 2) ** 2
                    if inside:
                        lab[i, j, k] = pc.VOID
                        break
    return lab
