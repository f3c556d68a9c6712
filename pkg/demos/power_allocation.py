"""Power allocation with finite-alphabet inputs.

Gaussian inputs pour power into strong channels until the water level is
flat.  BPSK inputs saturate at one bit, so mercury/waterfilling stops
feeding a channel once its MMSE is small and hands the rest to weaker
channels.  With two users the same logic decides whether a user should
spend its whole budget at all.
"""

import numpy as np

from macimmse import bpsk, mercury_waterfilling, scalar_system, solve_power_allocation, waterfilling
from macimmse.opt import SolverOptions


def main():
    gains = np.array([2.0, 1.0, 0.5, 0.25])
    print("channel gains:", gains)
    for snr in (0.5, 2.0, 10.0):
        gauss = waterfilling(gains, 2.0, snr)
        merc = mercury_waterfilling(gains, 2.0, snr, bpsk()).powers1
        print(f"snr {snr:4.1f}  waterfilling {np.round(gauss, 3)}  BPSK mercury {np.round(merc, 3)}")
    print("At high snr mercury gives the weak channels more, since the strong ones are already saturated.")

    print("\nTwo co-phase BPSK users with budgets 4 and 2 at snr 1:")
    pa = solve_power_allocation(scalar_system(), (4.0, 2.0), SolverOptions(stats_method="quadrature"))
    print(f"  user 1 spends {pa.powers1[0]:.3f} of 4, user 2 spends {pa.powers2[0]:.3f} of 2 "
          f"({pa.iterations} iterations, converged={pa.converged})")
    print("The weaker user backs off: more power would only make the two BPSK signals harder to separate.")


if __name__ == "__main__":
    main()
