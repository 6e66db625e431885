"""
Cryptographic building blocks
==============================

Hashes and commitments, recoverable signatures, Shamir sharing of a 256-bit
key and the layered ("onion") public-key encryption that hides each share.
"""

import random

from timedexec.crypto import (
    commit,
    combine_shares,
    hash256,
    keypair_generate,
    random_secret,
    recover,
    sign,
    split_key,
    unwrap_onion,
    wrap_onion,
)

rng = random.Random(2024)

# keccak-256, the hash every commitment uses
print("keccak256('') =", hash256(b"").hex())

# a trustee commits to its address and a private nonce
trustee = keypair_generate(rng)
nonce = random_secret(rng)
print("commitment    =", commit([trustee.address, nonce]).hex())

# signatures recover the signer's address, nothing else needed
sig = sign(b"I agree to guard slot 3", trustee.private_key)
print("signer        =", recover(b"I agree to guard slot 3", sig), "==", trustee.address)

# split a key 2-of-5, rebuild from any two shares
key = random_secret(rng)
shares = split_key(key, m=2, n=5, rng=rng)
print("shares        =", [s.index for s in shares])
print("rebuilt from shares 2 and 5:", combine_shares([shares[1], shares[4]], m=2) == key)

# wrap one share in two layers; peeling needs the keys outermost first
layer_keys = [keypair_generate(rng) for _ in range(2)]
onion = wrap_onion(shares[0], [k.public_key for k in layer_keys], rng)
print("onion bytes   =", len(onion.ciphertext), "layers =", onion.layers)
peeled = unwrap_onion(onion, [k.private_key for k in reversed(layer_keys)])
print("peeled share == original:", peeled == shares[0])
