"""Estimating solutions of the Poisson equation pointwise.

A coupled pair started from (x, y) and run to its meeting time gives an
unbiased estimate of g(x) - g(y), where g solves (I - P) g = h - pi(h).
This script profiles those estimates over a grid: first for the AR(1)
chain, where the exact solution is linear and known, then for the two
samplers of the Cauchy location posterior, whose fishy functions differ
dramatically even though the target is the same.
"""

import numpy as np

from fishyvar import (
    Ar1Model,
    CauchyNormalModel,
    RngStream,
    TestFunction,
    ar1_fishy_exact,
    ar1_kernel,
    cauchy_gibbs_kernel,
    cauchy_mrth_kernel,
    fishy_profile,
)

IDENTITY = TestFunction(lambda x: float(x), 1, "identity")


def print_profile(profile, exact=None):
    header = f"{'x':>6} {'mean':>10} {'se':>8} {'E[G^2]':>12} {'cost':>8}"
    if exact:
        header += f" {'exact':>10}"
    print(header)
    for i, x in enumerate(profile.x):
        row = (
            f"{x:6.1f} {profile.mean[i]:10.3f} {profile.se[i]:8.3f} "
            f"{profile.second_moment[i]:12.2f} {profile.mean_cost[i]:8.1f}"
        )
        if exact:
            row += f" {exact(x):10.3f}"
        print(row)


def main():
    print("=" * 72)
    print("AR(1), phi = 0.9: anchored fishy values vs the closed form")
    print("=" * 72)
    kernel = ar1_kernel(Ar1Model(0.9, 1.0))
    grid = np.linspace(-3, 3, 7)
    profile = fishy_profile(kernel, IDENTITY, grid, y=0.0, n_reps=4000, stream=RngStream(11))
    print_profile(profile, exact=lambda x: ar1_fishy_exact(0.9, x, 0.0))
    slope = np.polyfit(profile.x, profile.mean, 1)[0]
    print(f"\nfitted slope {slope:.2f} against exact 1/(1 - phi) = 10")

    cauchy = CauchyNormalModel()
    grid = np.linspace(-20, 25, 10)
    for name, kernel in (
        ("Gibbs", cauchy_gibbs_kernel(cauchy)),
        ("MRTH", cauchy_mrth_kernel(cauchy)),
    ):
        print("\n" + "=" * 72)
        print(f"Cauchy posterior, {name} sampler: fishy profile, anchor y = 0")
        print("=" * 72)
        profile = fishy_profile(kernel, IDENTITY, grid, y=0.0, n_reps=1000, stream=RngStream(12))
        print_profile(profile)

    print(
        "\nThe Gibbs fishy values stay bounded in x while the MRTH ones grow,"
        "\nmirroring how far each sampler's transient bias can wander; the"
        "\nsecond-moment column is exactly what the optimal selection"
        "\nprobabilities of the variance estimator consume."
    )


if __name__ == "__main__":
    main()
