"""
One honest schedule, start to finish
====================================

Test instance A: l=3 layers, m=2 of n=5 shares, 15 trustees.  The user hides
a sealed-bid reveal behind the protocol; the trustees release their keys and
onions during the execution window and one of them makes the call.
"""

from timedexec.adversary import run_scenario
from timedexec.config import instance_a

config = instance_a(seed=0)
outcome = run_scenario(config)

print("executed:", outcome.executed, "phase:", outcome.phase.value)
print("slashes:", len(outcome.slashes))

(call,) = outcome.target_log
print("target called at tick", call.tick, "with the original input:", call.arguments == outcome.inputs)

print()
print("invocations per function")
for name, count in outcome.invocation_counts.items():
    print(f"  {name:<14}{count:>4}")

# deposits, rewards and the executor bonus all end up with the beneficiaries
world, ledger = outcome.world, outcome.ledger
paid = [ledger.balance(t.beneficiary) for t in world.trustees.values() if 0 in t.assignments]
print()
print("paid out:", sum(paid), "scheduler left holding:", ledger.balance(world.scheduler_address))
print("state hash:", outcome.state_hash.hex())
