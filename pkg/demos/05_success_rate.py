"""
How reliable is a schedule?
===========================

If every trustee independently drops out with probability p_IM, a share is lost
when any of its l holders drops out, and the schedule fails once more than
n - m shares are lost.  The closed form is a binomial tail; a Monte Carlo run
of full simulated schedules should land on it.
"""

from timedexec.analytics import (
    SRParams,
    monotonicity_violations,
    monte_carlo_sr,
    rows_to_csv,
    standard_grid,
    sweep,
)

a = SRParams(l=3, m=2, n=5, p_im=0.05)
b = SRParams(l=4, m=4, n=10, p_im=0.05)
print(f"instance A: P(share lost) = {a.share_loss:.6f}, SR = {a.success_rate:.6f}")
print(f"instance B: P(share lost) = {b.share_loss:.6f}, SR = {b.success_rate:.6f}")

# success rate against m, one curve per l, for n = 5 and n = 10
rows = sweep(standard_grid())
for n in (5, 10):
    print(f"\nn = {n}")
    print("   m  " + "  ".join(f"l={l:<6}" for l in (3, 4, 5)))
    for m in range(1, n + 1):
        cells = [r.sr_analytic for r in rows if r.params.n == n and r.params.m == m]
        print(f"  {m:>2}  " + "  ".join(f"{sr:.6f}" for sr in cells))
print("\nmonotonicity violations:", monotonicity_violations(rows))

# a small Monte Carlo check; the acceptance suite runs 10^5 of these
mc = monte_carlo_sr(a, runs=2_000, seed=0)
print(f"\nMonte Carlo, {mc.runs} runs: {mc.estimate:.4f} +/- {mc.stderr:.4f} (z = {mc.z_score(a.success_rate):.2f})")

print()
print(rows_to_csv(rows[:5]), end="")
