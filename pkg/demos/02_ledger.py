"""
The simulated ledger
====================

Accounts, ticks and atomic transactions.  A transaction either commits every
effect or none, and the whole history replays to the same state hash.
"""

import random

from timedexec.crypto import keypair_generate
from timedexec.ledger import Revert, genesis, replay

rng = random.Random(1)
alice, bob = keypair_generate(rng), keypair_generate(rng)

ledger = genesis([(alice.address, 1_000), (bob.address, 50)])
print("supply:", ledger.total_supply())

ledger.advance_time(3)
ledger.submit(alice.address, bob.address, "transfer", value=200)
print("after transfer:", ledger.balance(alice.address), ledger.balance(bob.address))

# an overdraft is rejected and leaves no trace in the state
before = ledger.state_hash()
try:
    ledger.submit(bob.address, alice.address, "transfer", value=10_000)
except Revert as exc:
    print("rejected:", exc)
print("state unchanged:", ledger.state_hash() == before)

# contracts are deployed by kind and get creator-derived addresses
auction = ledger.submit(alice.address, None, "deploy", "sealed_bid_auction")
print("auction deployed at", auction)

print()
print("\n".join(ledger.trace_lines()))

again = replay(ledger.genesis_balances, ledger.submitted, ledger.clock)
print()
print("replayed hash matches:", again.state_hash() == ledger.state_hash())
print("replayed trace matches:", again.trace_lines() == ledger.trace_lines())
