"""
Catching trustees who misbehave
===============================

Each kind of misbehavior leaves evidence that someone can turn into a report.
A verified report slashes the trustee's deposit: half to the reporter, the
rest back to the user.
"""

from timedexec.adversary import run_scenario
from timedexec.config import instance_a

cases = {
    "absent": 4,                # never submits its key
    "fake_submission": 3,       # submits a key that opens nothing
    "identity_disclosure": 7,   # reveals that it guards this schedule
    "advance_disclosure": 11,   # hands its secret out before the window
}

for kind, tid in cases.items():
    outcome = run_scenario(instance_a(seed=100 + tid, slot_policies={tid: kind}))
    (report,) = outcome.slashes
    print(
        f"{kind:<20} tid={report.tid:<3} report={report.kind.value:<9}"
        f" award={report.award} refund={report.refund} executed={outcome.executed}"
    )

# four of five onion holders vanish: only one share survives, m=2 is out of reach
absent = {tid: "absent" for tid in (10, 11, 12, 13)}
outcome = run_scenario(instance_a(seed=6, slot_policies=absent))
print()
print("four storers absent ->", outcome.phase.value, "with", len(outcome.slashes), "slashed")

# random misbehavior: everyone slashed misbehaved, and every misbehaver was slashed
mix = {"absent": 0.05, "fake_submission": 0.05, "identity_disclosure": 0.05, "advance_disclosure": 0.05}
executed = slashed = 0
for seed in range(100):
    outcome = run_scenario(instance_a(seed=seed, mix=mix))
    executed += outcome.executed
    slashed += len(outcome.slashes)
print(f"100 mixed runs: {executed} executed, {slashed} deposits slashed")
