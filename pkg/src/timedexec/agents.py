"""Off-chain participants: the scheduling user and the trustees.

Slot layout: share ``j`` (Shamir index ``j + 1``) is wrapped by the
first-round slots ``j*(l-1) ... j*(l-1) + l-2`` (lowest tid is the
innermost layer) and stored by the second-round slot ``n*(l-1) + j``.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field
from typing import Any

from .crypto import (
    Address,
    CryptoError,
    Digest,
    KeyPair,
    Onion,
    SecretKey256,
    Share,
    Signature,
    combine_shares,
    commit,
    derive_pubkey,
    hash256,
    random_secret,
    recover,
    sign,
    split_key,
    sym_decrypt,
    sym_encrypt,
    unwrap_onion,
    wrap_onion,
)
from .ledger import LedgerState, Revert, TimeWindow
from .policies import HONEST, Behavior, BehaviorPolicy
from .proxy import ProxyContract
from .scheduler import Phase, SchedulerContract, agreement_message, required_payment

__all__ = [
    "ScheduleError",
    "InsufficientPoolError",
    "HandshakeError",
    "Offer",
    "Acceptance",
    "Refusal",
    "IdentityLeak",
    "KeyLeak",
    "WhisperBus",
    "World",
    "UserSecrets",
    "TrusteeState",
    "Trustee",
    "User",
    "ScheduleParams",
    "encode_payload",
    "decode_payload",
    "share_slots",
    "user_schedule_flow",
    "trustee_handshake",
    "trustee_execution_flow",
    "HANDSHAKE_ATTEMPTS",
]

HANDSHAKE_ATTEMPTS = 3


class ScheduleError(Exception):
    pass


class InsufficientPoolError(ScheduleError):
    pass


class HandshakeError(ScheduleError):
    pass


# -- whisper messages --------------------------------------------------------


@dataclass(frozen=True)
class Offer:
    sid: int
    tid: int
    onion: bytes | None = None


@dataclass(frozen=True)
class Acceptance:
    commitment: Digest
    vrs: Signature


@dataclass(frozen=True)
class Refusal:
    reason: str


@dataclass(frozen=True)
class IdentityLeak:
    address: Address
    nonce: bytes
    sid: int
    tid: int


@dataclass(frozen=True)
class KeyLeak:
    private_key: bytes
    sid: int
    tid: int


class WhisperBus:
    """Point-to-point private channels plus a log of deliberate leaks."""

    def __init__(self) -> None:
        self.channels: dict[tuple[Address, Address], list[Any]] = {}
        self.eavesdrop_log: list[tuple[int, Address, Any]] = []

    def send(self, src: Address, dst: Address, payload: Any) -> None:
        self.channels.setdefault((src, dst), []).append(payload)

    def visible_to(self, observer: Address) -> list[Any]:
        """Everything ``observer`` can read: its own channels and public leaks."""
        seen = [m for (a, b), msgs in self.channels.items() if observer in (a, b) for m in msgs]
        return seen + [payload for _, _, payload in self.eavesdrop_log]

    def leak(self, tick: int, src: Address, payload: Any) -> None:
        self.eavesdrop_log.append((tick, src, payload))

    def export(self, redact: bool = True) -> list[dict]:
        out = []
        for (src, dst), msgs in self.channels.items():
            for m in msgs:
                out.append(
                    {"from": str(src), "to": str(dst), "type": type(m).__name__, "body": None if redact else repr(m)}
                )
        return out


@dataclass
class World:
    """Everything agents can reach: the ledger, well-known contracts, channels."""

    ledger: LedgerState
    scheduler_address: Address
    target_address: Address
    rng: random.Random
    bus: WhisperBus = field(default_factory=WhisperBus)
    board: dict[int, bytes] = field(default_factory=dict)
    trustees: dict[Address, "Trustee"] = field(default_factory=dict)

    @property
    def scheduler(self) -> SchedulerContract:
        return self.ledger.contract(self.scheduler_address)

    def proxy(self, sid: int) -> ProxyContract:
        return self.ledger.contract(self.scheduler.schedule(sid).proxy)

    def send(self, sender: Address, target: Address | None, function: str, *args, value: int = 0):
        return self.ledger.submit(sender, target, function, *args, value=value)


# -- payload encoding -----------------------------------------------------------


def encode_payload(inputs: bytes, signatures: list[Signature], nonce: bytes) -> bytes:
    """(IN, vrs[0..nl), R_U) as length-prefixed bytes."""
    body = b"".join(sig.to_bytes() for sig in signatures)
    return struct.pack(">I", len(inputs)) + inputs + struct.pack(">H", len(signatures)) + body + bytes(nonce)


def decode_payload(data: bytes) -> tuple[bytes, list[Signature], SecretKey256]:
    (size,) = struct.unpack_from(">I", data, 0)
    inputs = data[4 : 4 + size]
    (count,) = struct.unpack_from(">H", data, 4 + size)
    pos = 6 + size
    sigs = [Signature.from_bytes(data[pos + 65 * i : pos + 65 * (i + 1)]) for i in range(count)]
    nonce = data[pos + 65 * count :]
    return bytes(inputs), sigs, SecretKey256(nonce)


def share_slots(j: int, n: int, l: int) -> tuple[list[int], int]:
    """First-round tids wrapping share ``j`` (innermost first) and its storer tid."""
    first = list(range(j * (l - 1), j * (l - 1) + l - 1))
    return first, n * (l - 1) + j


# -- users ---------------------------------------------------------------------


@dataclass(frozen=True)
class ScheduleParams:
    inputs: bytes
    w_e: TimeWindow
    m: int
    n: int
    l: int
    selector: str = "reveal"


@dataclass
class UserSecrets:
    inputs: bytes
    key: SecretKey256
    nonce: SecretKey256
    shares: list[Share] = field(default_factory=list)
    onions: list[Onion] = field(default_factory=list)
    signatures: list[Signature | None] = field(default_factory=list)
    commitments: list[Digest | None] = field(default_factory=list)
    trustees: list[Address | None] = field(default_factory=list)


@dataclass
class User:
    keypair: KeyPair
    schedules: dict[int, UserSecrets] = field(default_factory=dict)

    @property
    def address(self) -> Address:
        return self.keypair.address


def _recruit(world: World, user: User, sid: int, tid: int, queue: list, offer_onion: bytes | None, secrets: UserSecrets) -> None:
    for _ in range(HANDSHAKE_ATTEMPTS):
        if not queue:
            raise InsufficientPoolError("candidate pool exhausted during selection")
        candidate = queue.pop()
        trustee = world.trustees.get(candidate.address)
        offer = Offer(sid, tid, offer_onion)
        world.bus.send(user.address, candidate.address, offer)
        reply = trustee_handshake(world, trustee, user.address, offer) if trustee else Refusal("unreachable")
        world.bus.send(candidate.address, user.address, reply)
        if isinstance(reply, Acceptance):
            secrets.signatures[tid] = reply.vrs
            secrets.commitments[tid] = reply.commitment
            secrets.trustees[tid] = candidate.address
            return
    raise HandshakeError(f"slot {tid}: {HANDSHAKE_ATTEMPTS} candidates refused")


def user_schedule_flow(world: World, user: User, params: ScheduleParams) -> int:
    """Run the whole scheduling procedure and return the armed schedule id."""
    rng = world.rng
    sched = world.scheduler
    m, n, l = params.m, params.n, params.l
    eligible = sched.eligible(params.w_e, exclude=user.address)
    if len(eligible) < n * l:
        raise InsufficientPoolError(f"{len(eligible)} eligible candidates, {n * l} needed")

    secrets = UserSecrets(params.inputs, random_secret(rng), random_secret(rng))
    payment = required_payment(n, l, sched.trustee_reward, sched.executor_bonus)
    proxy = world.send(
        user.address, None, "deploy", "proxy", world.scheduler_address, world.target_address, params.selector
    )
    sid = world.send(user.address, world.scheduler_address, "newSchedule", params.w_e, m, n, l, proxy, value=payment)
    user.schedules[sid] = secrets
    secrets.shares = split_key(secrets.key, m, n, rng)
    slots = n * l
    secrets.signatures = [None] * slots
    secrets.commitments = [None] * slots
    secrets.trustees = [None] * slots

    # popping from the end of a shuffled list is selection without replacement
    queue = rng.sample(eligible, len(eligible))
    first_round = n * (l - 1)
    for tid in range(first_round):
        _recruit(world, user, sid, tid, queue, None, secrets)

    pubkeys = {tid: sched.candidates[secrets.trustees[tid]].public_key for tid in range(first_round)}
    for j, share in enumerate(secrets.shares):
        layer_tids, _ = share_slots(j, n, l)
        secrets.onions.append(wrap_onion(share, [pubkeys[t] for t in layer_tids], rng))
    world.send(user.address, world.scheduler_address, "setOnion", sid, [hash256(o.ciphertext) for o in secrets.onions])

    for j, onion in enumerate(secrets.onions):
        _recruit(world, user, sid, first_round + j, queue, onion.ciphertext, secrets)

    payload = encode_payload(params.inputs, secrets.signatures, secrets.nonce)
    world.board[sid] = sym_encrypt(secrets.key, payload).data
    world.send(
        user.address,
        world.scheduler_address,
        "setTrustee",
        sid,
        list(secrets.commitments),
        commit([params.inputs, secrets.nonce]),
    )
    return sid


def user_fallback_reports(world: World, user: User, sid: int) -> list:
    """Report absent or fake trustees using the signatures only the user holds.

    This is what still punishes absentees when too few shares survive for
    anyone else to decrypt the signature list.
    """
    secrets = user.schedules[sid]
    sched = world.scheduler
    rec = sched.schedule(sid)
    filed = []
    for tid in range(rec.slots):
        slot = sched.slot(sid, tid)
        if slot.slashed:
            continue
        try:
            if not slot.submitted:
                filed.append(world.send(user.address, world.scheduler_address, "absentReport", sid, tid, secrets.signatures[tid]))
            elif _is_fake(sched, slot):
                filed.append(world.send(user.address, world.scheduler_address, "fakeReport", sid, tid))
        except Revert:
            continue
    return filed


# -- trustees ------------------------------------------------------------------------


@dataclass
class TrusteeState:
    sid: int
    tid: int
    nonce: SecretKey256
    onion: bytes | None = None
    policy: BehaviorPolicy = HONEST


@dataclass
class Trustee:
    keypair: KeyPair
    beneficiary: Address
    whisper_key: bytes
    working_window: TimeWindow
    policy: BehaviorPolicy = HONEST
    assignments: dict[int, TrusteeState] = field(default_factory=dict)

    @property
    def address(self) -> Address:
        return self.keypair.address

    def apply(self, world: World, deposit: int) -> None:
        world.send(
            self.address,
            world.scheduler_address,
            "newCandidate",
            self.keypair.public_key,
            self.whisper_key,
            self.working_window,
            self.beneficiary,
            value=deposit,
        )


def trustee_handshake(world: World, trustee: Trustee, user_address: Address, offer: Offer) -> Acceptance | Refusal:
    """Check an offer against the immutable on-chain schedule, then sign it."""
    sched = world.scheduler
    try:
        rec = sched.schedule(offer.sid)
    except Revert:
        return Refusal("unknown schedule")
    if rec.user != user_address:
        return Refusal("schedule belongs to another user")
    if not trustee.working_window.covers(rec.w_e):
        return Refusal("execution window outside working window")
    if rec.remuneration != required_payment(rec.n, rec.l, sched.trustee_reward, sched.executor_bonus):
        return Refusal("remuneration mismatch")
    if offer.sid in trustee.assignments:
        return Refusal("already serving this schedule")
    if offer.onion is None:
        if rec.phase is not Phase.REGISTERED or not 0 <= offer.tid < rec.first_round:
            return Refusal("not a first-round slot")
    else:
        if rec.phase is not Phase.ONIONS_COMMITTED or not rec.first_round <= offer.tid < rec.slots:
            return Refusal("not a second-round slot")
        if hash256(offer.onion) != rec.onion_commitments[offer.tid - rec.first_round]:
            return Refusal("onion does not match on-chain hash")
    nonce = random_secret(world.rng)
    commitment = commit([trustee.address, nonce])
    vrs = sign(agreement_message(user_address, offer.sid, offer.tid, commitment), trustee.keypair.private_key)
    trustee.assignments[offer.sid] = TrusteeState(offer.sid, offer.tid, nonce, offer.onion, trustee.policy)
    return Acceptance(commitment, vrs)


def trustee_leak(world: World, trustee: Trustee, sid: int) -> None:
    """Pre-window misbehavior for leaking policies."""
    state = trustee.assignments.get(sid)
    if state is None:
        return
    tick = world.ledger.clock
    if state.policy.kind is Behavior.IDENTITY_DISCLOSURE:
        world.bus.leak(tick, trustee.address, IdentityLeak(trustee.address, state.nonce, sid, state.tid))
    elif state.policy.kind is Behavior.ADVANCE_DISCLOSURE:
        world.bus.leak(tick, trustee.address, KeyLeak(trustee.keypair.private_key, sid, state.tid))


def _fake_key(rng: random.Random, real: bytes) -> bytes:
    while True:
        key = rng.randbytes(32)
        if key != real and 0 < int.from_bytes(key, "big"):
            return key


def trustee_submission_step(world: World, trustee: Trustee, sid: int) -> bool:
    """First half of the execution window: reveal identity and submit."""
    state = trustee.assignments.get(sid)
    if state is None or state.policy.kind in (Behavior.ABSENT, Behavior.INADVERTENT):
        return False
    proxy_addr = world.scheduler.schedule(sid).proxy
    try:
        if state.onion is None:
            key = trustee.keypair.private_key
            if state.policy.kind is Behavior.FAKE_SUBMISSION:
                key = _fake_key(world.rng, key)
            world.send(trustee.address, proxy_addr, "submitPrivkey", state.tid, key, state.nonce)
        else:
            onion = state.onion
            if state.policy.kind is Behavior.FAKE_SUBMISSION:
                onion = bytes([onion[0] ^ 1]) + onion[1:]
            world.send(trustee.address, proxy_addr, "submitOnion", state.tid, onion, state.nonce)
    except Revert:
        return False
    return True


def _is_fake(sched: SchedulerContract, slot) -> bool:
    if slot.submitted_privkey is None or slot.revealed_address is None:
        return False
    try:
        return derive_pubkey(slot.submitted_privkey) != sched.candidates[slot.revealed_address].public_key
    except CryptoError:
        return True


def reconstruct(world: World, sid: int) -> tuple[bytes, list[Signature], SecretKey256] | None:
    """Rebuild (IN, vrs, R_U) from public submissions, or None if infeasible."""
    rec = world.scheduler.schedule(sid)
    proxy = world.proxy(sid)
    shares = []
    for j in range(rec.n):
        layer_tids, storer = share_slots(j, rec.n, rec.l)
        onion_bytes = proxy.submitted_onions.get(storer)
        keys = [proxy.submitted_privkeys.get(t) for t in reversed(layer_tids)]
        if onion_bytes is None or any(k is None for k in keys):
            continue
        try:
            shares.append(unwrap_onion(Onion(j + 1, rec.l - 1, onion_bytes), keys))
        except CryptoError:
            continue
        if len(shares) == rec.m:
            break
    if len(shares) < rec.m or sid not in world.board:
        return None
    key = combine_shares(shares, rec.m)
    try:
        inputs, sigs, nonce = decode_payload(sym_decrypt(key, world.board[sid]))
    except (CryptoError, ValueError, struct.error):
        return None
    if commit([inputs, nonce]) != rec.input_commitment:
        return None
    return inputs, sigs, nonce


def trustee_execution_flow(world: World, trustee: Trustee, sid: int) -> None:
    """Second half of the execution window: reconstruct, report, execute."""
    state = trustee.assignments.get(sid)
    if state is None or state.policy.kind in (Behavior.ABSENT, Behavior.INADVERTENT, Behavior.FAKE_SUBMISSION):
        return
    sched = world.scheduler
    rec = sched.schedule(sid)
    if sched.bound_tid(sid, trustee.address) is None:
        return
    proxy = world.proxy(sid)
    slots = [sched.slot(sid, tid) for tid in range(rec.slots)]
    fakes = [s.tid for s in slots if not s.slashed and _is_fake(sched, s)]
    missing = [s.tid for s in slots if not s.slashed and not s.submitted]
    for tid in fakes:
        try:
            world.send(trustee.address, world.scheduler_address, "fakeReport", sid, tid)
        except Revert:
            pass
    if proxy.executed and not missing:
        return
    revealed = reconstruct(world, sid)
    if revealed is None:
        return
    inputs, sigs, nonce = revealed
    for tid, slot in enumerate(slots):
        try:
            signer = recover(agreement_message(rec.user, sid, tid, slot.commitment), sigs[tid])
        except CryptoError:
            continue
        if slot.revealed_address is not None and signer != slot.revealed_address:
            continue  # user-supplied signature disagrees with on-chain binding
        if tid in missing:
            try:
                world.send(trustee.address, world.scheduler_address, "absentReport", sid, tid, sigs[tid])
            except Revert:
                pass
    if not proxy.executed:
        try:
            world.send(trustee.address, proxy.address, "execute", inputs, nonce)
        except Revert:
            pass
