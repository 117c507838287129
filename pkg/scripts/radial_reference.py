"""Monte-Carlo oracle for the radial reference constants in diagnostics.py.

Draws 10**7 standard normal vectors per dimension (Philox, seed 777, in
blocks) and prints the mean and standard deviation of the radius. The
printed values are checked into cowboys/diagnostics.py as CHI_MEAN and
CHI_SD; rerun this script to regenerate them.
"""

import numpy as np

SEED = 777
N = 10_000_000
BLOCK = 250_000
DIMS = (1, 2, 8, 16, 32, 64, 128)


def radial_moments(dim: int) -> tuple[float, float]:
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(SEED, spawn_key=(dim,))))
    total = 0.0
    total_sq = 0.0
    seen = 0
    while seen < N:
        m = min(BLOCK, N - seen)
        r = np.linalg.norm(gen.standard_normal((m, dim)), axis=1)
        total += r.sum()
        total_sq += (r * r).sum()
        seen += m
    mean = total / N
    sd = np.sqrt(total_sq / N - mean * mean)
    return mean, sd


if __name__ == "__main__":
    print(f"# seed={SEED} n={N}")
    print("CHI_MEAN = {")
    stats = {d: radial_moments(d) for d in DIMS}
    for d in DIMS:
        print(f"    {d}: {stats[d][0]:.6f},")
    print("}")
    print("CHI_SD = {")
    for d in DIMS:
        print(f"    {d}: {stats[d][1]:.6f},")
    print("}")
