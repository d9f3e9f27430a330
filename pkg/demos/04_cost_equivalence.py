"""Two bookkeepings of the same cost.

Along controlled paths, a player's cost can be written with sampled
log-likelihood ratios between controlled and reference path laws, or with
explicit quadratic control costs.  The two differ path by path but agree in
expectation; this script estimates both for the repulsive regime.

Run:  python demos/04_cost_equivalence.py
"""

from lsdg import constant_policy, cost_equivalence_check, equilibrium_policies, moving_wells_spec

spec = moving_wells_spec(0.6, dt=0.01)

print("Nominal policies (every likelihood term vanishes):")
for r in cost_equivalence_check(spec, [constant_policy(u) for u in spec.nominal_controls], 5000, seed=1):
    print(f"  player {r.player + 1}: measure form {r.J_measure:.4f}, control form {r.J_control:.4f}")

# Other players' controls are evaluated along player i's paths, possibly far
# from where they would go themselves, so those estimators get an ESS floor of 1.
own = equilibrium_policies(spec, 5000, seed=2)
cross = equilibrium_policies(spec, 5000, seed=2, ess_floor=1.0)
print("Path-integral equilibrium policies:")
for r in cost_equivalence_check(spec, own, 5000, seed=3, cross_policies=cross):
    print(f"  player {r.player + 1}: measure form {r.J_measure:.4f} +/- {r.se_measure:.4f}, "
          f"control form {r.J_control:.4f} +/- {r.se_control:.4f}, "
          f"difference {r.difference:+.4f} ({abs(r.difference) / r.se_combined:.1f} SE)")
