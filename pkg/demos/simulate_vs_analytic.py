"""Monte Carlo check of the analytic throughput on a small network.

Optimizes a two-channel, three-SU network, then simulates it with and
without reporting errors and compares against the matching analytic model.
"""
import numpy as np

from cogmac.model import ErrorModel, ScenarioConfig, SensingAssignment
from cogmac.optimize import optimize_params
from cogmac.simulate import SimSettings, simulate
from cogmac.throughput_reporting import normalized_throughput_re


def main():
    snr_db = np.array([[-14.0, -18.0], [-20.0, -13.0], [-16.0, -16.0]])
    sc = ScenarioConfig(M=2, N=3, p_idle=[0.7, 0.4], snr=10 ** (snr_db / 10))
    asg = SensingAssignment.from_matrix(np.array([[1, 0], [0, 1], [1, 1]], bool))
    params, report = optimize_params(sc, asg)
    print(f"optimized: p = {params.p:.3f}, a = {params.a.tolist()}, tau_max = {params.tau_max * 1e3:.2f} ms")

    for pe in (0.0, 0.02, 0.05):
        errors = ErrorModel.uniform(sc.N, pe)
        analytic = normalized_throughput_re(sc, params, asg, errors).nt
        sim = simulate(sc, params, asg, errors, SimSettings(seed=7, cycles=50_000))
        print(f"pe = {pe:.2f}: analytic {analytic:.4f}, simulated {sim.nt_estimate:.4f} +- {sim.stderr:.4f}, "
              f"PU collisions {int(sim.pu_collisions.sum())}")


if __name__ == "__main__":
    main()
