"""Print the false-alarm / misdetection / decoding exponent trade-off on CH1.

    python demos/tradeoff.py [rate]
"""
import sys

import numpy as np

from slotsync import ExponentProblem, compute_exponents, validate_dmc

W = [[0.95, 0.05], [0.8, 0.2], [0.2, 0.8]]


def main(rate=0.1):
    dmc = validate_dmc(W, 0)
    print(f"R = {rate}, P = (1/2, 1/2)")
    print(f"{'alpha':>6} {'beta':>6} {'E_FA':>8} {'E_MD':>8} {'E_DE':>8}")
    for alpha in (0.0, 0.3):
        for beta in np.linspace(-0.6, 0.9, 6):
            e = compute_exponents(ExponentProblem(dmc, [0.5, 0.5], rate, alpha, float(beta))).values()
            print(f"{alpha:6.2f} {beta:6.2f} {e['E_FA']:8.4f} {e['E_MD']:8.4f} {e['E_DE']:8.4f}")


if __name__ == "__main__":
    main(float(sys.argv[1]) if len(sys.argv) > 1 else 0.1)
