"""The scheduler contract: candidate pool, schedule registry, deposits, reports."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .crypto import (
    Address,
    CryptoError,
    Digest,
    Signature,
    commit,
    derive_pubkey,
    encode_packed,
    pubkey_to_address,
    recover,
)
from .ledger import Contract, Msg, Revert, TimeWindow, register_contract

__all__ = [
    "Phase",
    "CandidateStatus",
    "ReportKind",
    "CandidateRecord",
    "ScheduleRecord",
    "TrusteeSlot",
    "ReportRecord",
    "SchedulerContract",
    "DEFAULT_DEPOSIT",
    "DEFAULT_TRUSTEE_REWARD",
    "DEFAULT_EXECUTOR_BONUS",
    "agreement_message",
    "required_payment",
]

DEFAULT_DEPOSIT = 100
DEFAULT_TRUSTEE_REWARD = 10
DEFAULT_EXECUTOR_BONUS = 20


class Phase(str, enum.Enum):
    REGISTERED = "Registered"
    ONIONS_COMMITTED = "OnionsCommitted"
    TRUSTEES_COMMITTED = "TrusteesCommitted"
    SUBMISSION = "Submission"
    EXECUTION = "Execution"
    EXECUTED = "Executed"
    CLOSED = "Closed"
    FAILED = "Failed"


class CandidateStatus(str, enum.Enum):
    ACTIVE = "active"
    SLASHED = "slashed"
    WITHDRAWN = "withdrawn"


class ReportKind(str, enum.Enum):
    IDENTITY = "identity"
    ADVANCE = "advance"
    ABSENT = "absent"
    FAKE = "fake"


@dataclass(frozen=True)
class CandidateRecord:
    address: Address
    public_key: bytes
    whisper_key: bytes
    working_window: TimeWindow
    deposit: int
    beneficiary: Address
    status: CandidateStatus = CandidateStatus.ACTIVE


@dataclass(frozen=True)
class ScheduleRecord:
    sid: int
    user: Address
    w_e: TimeWindow
    m: int
    n: int
    l: int
    proxy: Address
    remuneration: int
    escrow: int
    onion_commitments: tuple[Digest, ...] = ()
    trustee_commitments: tuple[Digest, ...] = ()
    input_commitment: Digest | None = None
    phase: Phase = Phase.REGISTERED
    executor_tid: int | None = None

    @property
    def slots(self) -> int:
        return self.n * self.l

    @property
    def first_round(self) -> int:
        """Number of key-holding (first-round) slots; tids below this hold keys."""
        return self.n * (self.l - 1)


@dataclass(frozen=True)
class TrusteeSlot:
    sid: int
    tid: int
    commitment: Digest
    revealed_nonce: bytes | None = None
    revealed_address: Address | None = None
    submitted_privkey: bytes | None = None
    submitted_onion: bool = False
    slashed: bool = False
    reward_paid: bool = False

    @property
    def submitted(self) -> bool:
        return self.submitted_privkey is not None or self.submitted_onion


@dataclass(frozen=True)
class ReportRecord:
    kind: ReportKind
    reporter: Address
    violator: Address
    sid: int
    tid: int
    verified: bool
    award: int
    refund: int
    tick: int


def required_payment(n: int, l: int, trustee_reward: int, executor_bonus: int) -> int:
    return n * l * trustee_reward + executor_bonus


def agreement_message(user: Address, sid: int, tid: int, commitment: bytes) -> bytes:
    """Bytes a trustee signs to accept slot ``tid`` of schedule ``sid``."""
    return encode_packed([Address(user), sid, tid, Digest(commitment)])


def _phase_at(rec: ScheduleRecord, tick: int) -> Phase:
    stored = rec.phase
    if stored in (Phase.REGISTERED, Phase.ONIONS_COMMITTED, Phase.CLOSED, Phase.FAILED):
        return stored
    if stored is Phase.EXECUTED:
        return Phase.CLOSED if tick >= rec.w_e.end else Phase.EXECUTED
    if tick < rec.w_e.start:
        return Phase.TRUSTEES_COMMITTED
    if tick < rec.w_e.midpoint:
        return Phase.SUBMISSION
    if tick < rec.w_e.end:
        return Phase.EXECUTION
    return Phase.FAILED


@register_contract
class SchedulerContract(Contract):
    KIND = "scheduler"
    ENTRYPOINTS = {
        "newCandidate": "new_candidate",
        "newUser": "new_user",
        "newSchedule": "new_schedule",
        "setOnion": "set_onion",
        "setTrustee": "set_trustee",
        "verifyIdentity": "verify_identity",
        "noteSubmission": "note_submission",
        "withdrawPermission": "withdraw_permission",
        "withdrawD": "withdraw_deposit",
        "withdrawR": "withdraw_remuneration",
        "identityReport": "identity_report",
        "advanceReport": "advance_report",
        "absentReport": "absent_report",
        "fakeReport": "fake_report",
        "withdrawA": "withdraw_award",
    }

    def setup(
        self,
        msg: Msg,
        deposit: int = DEFAULT_DEPOSIT,
        trustee_reward: int = DEFAULT_TRUSTEE_REWARD,
        executor_bonus: int = DEFAULT_EXECUTOR_BONUS,
    ) -> None:
        if min(deposit, trustee_reward, executor_bonus) < 0:
            raise Revert("protocol constants must be non-negative")
        self.deposit = deposit
        self.trustee_reward = trustee_reward
        self.executor_bonus = executor_bonus
        self.candidates: dict[Address, CandidateRecord] = {}
        self.users: dict[Address, int] = {}
        self.schedules: dict[int, ScheduleRecord] = {}
        self.slots: dict[tuple[int, int], TrusteeSlot] = {}
        self.bindings: dict[tuple[int, Address], int] = {}
        self.reports: list[ReportRecord] = []
        self.awards: dict[tuple[Address, int], int] = {}
        self.next_sid = 0

    # -- read-only views ------------------------------------------------------

    def pool(self) -> list[CandidateRecord]:
        return [c for c in self.candidates.values() if c.status is CandidateStatus.ACTIVE]

    def eligible(self, w_e: TimeWindow, exclude: Address | None = None) -> list[CandidateRecord]:
        return [c for c in self.pool() if c.working_window.covers(w_e) and c.address != exclude]

    def schedule(self, sid: int) -> ScheduleRecord:
        rec = self.schedules.get(sid)
        if rec is None:
            raise Revert(f"unknown schedule {sid}")
        return rec

    def phase(self, sid: int, tick: int | None = None) -> Phase:
        return _phase_at(self.schedule(sid), self.ledger.clock if tick is None else tick)

    def slot(self, sid: int, tid: int) -> TrusteeSlot:
        slot = self.slots.get((sid, tid))
        if slot is None:
            raise Revert(f"schedule {sid} has no slot {tid}")
        return slot

    def bound_tid(self, sid: int, address: Address) -> int | None:
        return self.bindings.get((sid, address))

    def pending_award(self, reporter: Address) -> int:
        return sum(v for (who, _), v in self.awards.items() if who == reporter)

    # -- helpers --------------------------------------------------------------

    def _touch(self, sid: int) -> ScheduleRecord:
        rec = self.schedule(sid)
        current = _phase_at(rec, self.ledger.clock)
        if current is not rec.phase:
            rec = replace(rec, phase=current)
            self._put(self.schedules, sid, rec)
        return rec

    def _own_schedule(self, msg: Msg, sid: int) -> ScheduleRecord:
        rec = self._touch(sid)
        if msg.sender != rec.user:
            raise Revert("only the schedule's user may do this")
        return rec

    def _slash(
        self,
        msg: Msg,
        kind: ReportKind,
        rec: ScheduleRecord,
        tid: int,
        violator: Address,
        mark_slot: bool = True,
    ) -> ReportRecord:
        cand = self.candidates.get(violator)
        if cand is None:
            raise Revert("violator is not a candidate")
        if cand.status is CandidateStatus.SLASHED:
            raise Revert("violator already slashed")
        if cand.status is CandidateStatus.WITHDRAWN:
            raise Revert("violator deposit already withdrawn")
        award = cand.deposit // 2
        refund = cand.deposit - award
        self._put(self.candidates, violator, replace(cand, status=CandidateStatus.SLASHED))
        self._checkpoint("slash:status")
        slot = self.slots.get((rec.sid, tid))
        if mark_slot and slot is not None:
            self._put(self.slots, (rec.sid, tid), replace(slot, slashed=True))
        key = (msg.sender, rec.sid)
        self._put(self.awards, key, self.awards.get(key, 0) + award)
        self._checkpoint("slash:award")
        self.ledger.transfer(self.address, rec.user, refund)
        report = ReportRecord(kind, msg.sender, violator, rec.sid, tid, True, award, refund, self.ledger.clock)
        self._append(self.reports, report)
        return report

    # -- trustee application -------------------------------------------------

    def new_candidate(
        self,
        msg: Msg,
        public_key: bytes,
        whisper_key: bytes,
        working_window: TimeWindow,
        beneficiary: Address,
    ) -> None:
        if msg.value != self.deposit:
            raise Revert(f"deposit must be exactly {self.deposit}")
        existing = self.candidates.get(msg.sender)
        if existing is not None and existing.status is not CandidateStatus.WITHDRAWN:
            raise Revert("already a candidate")
        if not isinstance(working_window, TimeWindow) or working_window.end <= msg.tick:
            raise Revert("malformed working window")
        if len(public_key) != 64 or pubkey_to_address(public_key) != msg.sender:
            raise Revert("public key does not belong to sender")
        if not whisper_key:
            raise Revert("missing whisper key")
        record = CandidateRecord(
            msg.sender, bytes(public_key), bytes(whisper_key), working_window, msg.value, Address(beneficiary)
        )
        self._put(self.candidates, msg.sender, record)

    # -- user schedule ----------------------------------------------------------

    def new_user(self, msg: Msg) -> None:
        if msg.sender in self.users:
            raise Revert("user already registered")
        self._put(self.users, msg.sender, msg.tick)

    def new_schedule(self, msg: Msg, w_e: TimeWindow, m: int, n: int, l: int, proxy: Address) -> int:
        if msg.sender not in self.users:
            raise Revert("sender is not a registered user")
        if not isinstance(w_e, TimeWindow) or w_e.start <= msg.tick:
            raise Revert("execution window must start in the future")
        if w_e.end - w_e.start < 2:
            raise Revert("execution window too short to split in halves")
        if not (1 <= m <= n <= 255 and l >= 2):
            raise Revert(f"bad parameters m={m} n={n} l={l}")
        payment = required_payment(n, l, self.trustee_reward, self.executor_bonus)
        if msg.value != payment:
            raise Revert(f"payment must be exactly {payment}")
        sid = self.next_sid
        self._set("next_sid", sid + 1)
        rec = ScheduleRecord(sid, msg.sender, w_e, m, n, l, Address(proxy), payment, payment)
        self._put(self.schedules, sid, rec)
        self._checkpoint("newSchedule:registered")
        self.ledger.call(self.address, proxy, "bindSchedule", (sid,))
        return sid

    def set_onion(self, msg: Msg, sid: int, onion_hashes) -> None:
        rec = self._own_schedule(msg, sid)
        if rec.phase is not Phase.REGISTERED:
            raise Revert(f"onion hashes not accepted in phase {rec.phase.value}")
        if len(onion_hashes) != rec.n:
            raise Revert(f"expected {rec.n} onion hashes")
        hashes = tuple(Digest(h) for h in onion_hashes)
        self._put(self.schedules, sid, replace(rec, onion_commitments=hashes, phase=Phase.ONIONS_COMMITTED))

    def set_trustee(self, msg: Msg, sid: int, trustee_hashes, input_commitment: bytes) -> None:
        rec = self._own_schedule(msg, sid)
        if rec.phase is not Phase.ONIONS_COMMITTED:
            raise Revert(f"trustee hashes not accepted in phase {rec.phase.value}")
        if msg.tick >= rec.w_e.start:
            raise Revert("schedule must be armed before the execution window")
        if len(trustee_hashes) != rec.slots:
            raise Revert(f"expected {rec.slots} trustee hashes")
        hashes = tuple(Digest(h) for h in trustee_hashes)
        self._put(
            self.schedules,
            sid,
            replace(
                rec,
                trustee_commitments=hashes,
                input_commitment=Digest(input_commitment),
                phase=Phase.TRUSTEES_COMMITTED,
            ),
        )
        for tid, digest in enumerate(hashes):
            self._put(self.slots, (sid, tid), TrusteeSlot(sid, tid, digest))

    # -- function execution -----------------------------------------------------

    def verify_identity(self, msg: Msg, sid: int, tid: int, nonce: bytes) -> None:
        rec = self._touch(sid)
        # the proxy forwards identity checks on behalf of the transacting trustee
        who = msg.origin if msg.sender == rec.proxy else msg.sender
        if rec.phase is not Phase.SUBMISSION:
            raise Revert("identities are verified only during the submission half")
        slot = self.slot(sid, tid)
        if slot.revealed_address is not None:
            raise Revert("slot already bound")
        if (sid, who) in self.bindings:
            raise Revert("address already bound to another slot")
        if commit([who, bytes(nonce)]) != slot.commitment:
            raise Revert("commitment mismatch")
        if who not in self.candidates:
            raise Revert("not a candidate")
        self._put(self.slots, (sid, tid), replace(slot, revealed_nonce=bytes(nonce), revealed_address=who))
        self._put(self.bindings, (sid, who), tid)

    def note_submission(self, msg: Msg, sid: int, tid: int, private_key: bytes | None = None) -> None:
        rec = self._touch(sid)
        if msg.sender != rec.proxy:
            raise Revert("only the schedule's proxy records submissions")
        slot = self.slot(sid, tid)
        if private_key is None:
            slot = replace(slot, submitted_onion=True)
        else:
            slot = replace(slot, submitted_privkey=bytes(private_key))
        self._put(self.slots, (sid, tid), slot)

    def withdraw_permission(self, msg: Msg, sid: int, executor: Address) -> None:
        rec = self._touch(sid)
        if msg.sender != rec.proxy:
            raise Revert("only the schedule's proxy may grant withdrawal")
        if rec.phase is not Phase.EXECUTION:
            raise Revert(f"cannot mark executed in phase {rec.phase.value}")
        tid = self.bindings.get((sid, executor))
        if tid is None:
            raise Revert("executor is not a bound trustee")
        self._put(self.schedules, sid, replace(rec, phase=Phase.EXECUTED, executor_tid=tid))

    # -- withdrawals -------------------------------------------------------------

    def withdraw_deposit(self, msg: Msg) -> int:
        cand = self.candidates.get(msg.sender)
        if cand is None:
            raise Revert("not a candidate")
        if cand.status is not CandidateStatus.ACTIVE:
            raise Revert(f"deposit not withdrawable: {cand.status.value}")
        if msg.tick < cand.working_window.end:
            raise Revert("working window still open")
        for (sid, who), _tid in self.bindings.items():
            if who == msg.sender and msg.tick < self.schedules[sid].w_e.end:
                raise Revert("a served schedule is still running")
        self._put(self.candidates, msg.sender, replace(cand, status=CandidateStatus.WITHDRAWN))
        self.ledger.transfer(self.address, cand.beneficiary, cand.deposit)
        return cand.deposit

    def withdraw_remuneration(self, msg: Msg, sid: int, tid: int) -> int:
        rec = self._touch(sid)
        if msg.tick < rec.w_e.end:
            raise Revert("remuneration locked until the execution window ends")
        if rec.phase is not Phase.CLOSED:
            raise Revert("schedule was not executed")
        slot = self.slot(sid, tid)
        if slot.revealed_address is None or slot.revealed_address != msg.sender:
            raise Revert("sender is not bound to this slot")
        if slot.reward_paid:
            raise Revert("remuneration already claimed")
        cand = self.candidates[msg.sender]
        if cand.status is CandidateStatus.SLASHED:
            raise Revert("slashed trustees forfeit remuneration")
        amount = self.trustee_reward + (self.executor_bonus if tid == rec.executor_tid else 0)
        self._put(self.slots, (sid, tid), replace(slot, reward_paid=True))
        self._put(self.schedules, sid, replace(rec, escrow=rec.escrow - amount))
        self._checkpoint("withdrawR:booked")
        self.ledger.transfer(self.address, cand.beneficiary, amount)
        return amount

    def withdraw_award(self, msg: Msg) -> int:
        total = 0
        for (who, sid), amount in list(self.awards.items()):
            if who == msg.sender and amount > 0 and msg.tick >= self.schedules[sid].w_e.end:
                total += amount
                self._put(self.awards, (who, sid), 0)
        if total == 0:
            raise Revert("no claimable award")
        self.ledger.transfer(self.address, msg.sender, total)
        return total

    # -- misbehavior reports -------------------------------------------------------

    def _armed(self, sid: int) -> ScheduleRecord:
        rec = self._touch(sid)
        if not rec.trustee_commitments:
            raise Revert("schedule has no trustee commitments yet")
        return rec

    def identity_report(self, msg: Msg, sid: int, tid: int, violator: Address, nonce: bytes) -> ReportRecord:
        rec = self._armed(sid)
        if msg.tick >= rec.w_e.start:
            raise Revert("identity reports close when the execution window opens")
        slot = self.slot(sid, tid)
        if commit([Address(violator), bytes(nonce)]) != slot.commitment:
            raise Revert("nonce does not match the slot commitment")
        return self._slash(msg, ReportKind.IDENTITY, rec, tid, Address(violator))

    def advance_report(self, msg: Msg, sid: int, tid: int, private_key: bytes) -> ReportRecord:
        rec = self._armed(sid)
        if msg.tick >= rec.w_e.start:
            raise Revert("advance reports close when the execution window opens")
        try:
            public_key = derive_pubkey(private_key)
        except CryptoError as exc:
            raise Revert("not a valid private key") from exc
        violator = pubkey_to_address(public_key)
        cand = self.candidates.get(violator)
        if cand is None or cand.public_key != public_key:
            raise Revert("key belongs to no candidate")
        # tid is the reporter's claim; the key alone proves the leak
        return self._slash(msg, ReportKind.ADVANCE, rec, tid, violator, mark_slot=False)

    def absent_report(self, msg: Msg, sid: int, tid: int, vrs: Signature) -> ReportRecord:
        rec = self._armed(sid)
        if msg.tick < rec.w_e.midpoint:
            raise Revert("absence is only decidable after the submission half")
        slot = self.slot(sid, tid)
        if slot.submitted:
            raise Revert("trustee submitted its data")
        try:
            violator = recover(agreement_message(rec.user, sid, tid, slot.commitment), vrs)
        except CryptoError as exc:
            raise Revert("signature recovery failed") from exc
        if violator not in self.candidates:
            raise Revert("signature matches no candidate")
        if slot.revealed_address is not None and slot.revealed_address != violator:
            raise Revert("slot bound to a different trustee")
        return self._slash(msg, ReportKind.ABSENT, rec, tid, violator)

    def fake_report(self, msg: Msg, sid: int, tid: int) -> ReportRecord:
        rec = self._armed(sid)
        if tid >= rec.first_round:
            raise Revert("only key submissions can be fake")
        slot = self.slot(sid, tid)
        if slot.submitted_privkey is None or slot.revealed_address is None:
            raise Revert("no key submitted for this slot")
        cand = self.candidates[slot.revealed_address]
        try:
            derived = derive_pubkey(slot.submitted_privkey)
        except CryptoError:
            derived = None
        if derived == cand.public_key:
            raise Revert("submitted key is genuine")
        return self._slash(msg, ReportKind.FAKE, rec, tid, slot.revealed_address)
