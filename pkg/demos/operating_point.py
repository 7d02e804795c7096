"""The optimized operating point of the 10x4 scenario at -7 dB.

Runs the greedy assignment, then shows how throughput reacts when the
sensing time of SU 1 on channel 1 or the access probability is moved away
from its optimum with everything else held fixed.
"""
from cogmac.assign import greedy_assignment
from cogmac.config import load_bundle
from cogmac.model import SensingAccessParams
from cogmac.throughput_exact import normalized_throughput_ne


def main():
    sc = load_bundle("fig4_10x4", dgamma=-7).scenario
    g = greedy_assignment(sc)
    params, asg = g.params, g.assignment
    print("assignment (rows = SUs, columns = channels):")
    for row in asg.grid():
        print("  " + row)
    print(f"tau11 = {params.tau[0, 0] * 1e3:.3f} ms, p = {params.p:.4f}, a = {params.a.tolist()}, NT = {g.nt:.4f}")

    print("\nfactor  NT(tau11 scaled)  NT(p scaled)")
    for f in (0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0):
        tau = params.tau.copy()
        tau[0, 0] *= f
        nt_tau = normalized_throughput_ne(sc, SensingAccessParams(tau, params.a, params.p), asg).nt
        nt_p = normalized_throughput_ne(sc, SensingAccessParams(params.tau, params.a, params.p * f), asg).nt
        print(f"{f:6.2f}  {nt_tau:16.4f}  {nt_p:12.4f}")


if __name__ == "__main__":
    main()
