"""Per-schedule proxy contract and the sealed-bid auction target stub."""

from __future__ import annotations

from dataclasses import dataclass

from .crypto import Address, commit, encode_packed, hash256
from .ledger import Contract, Msg, Revert, register_contract
from .scheduler import Phase, SchedulerContract

__all__ = ["ProxyContract", "SealedBidAuction", "Invocation", "encode_bid", "decode_bid"]


def encode_bid(amount: int, nonce: int) -> bytes:
    """Function inputs for ``reveal(amount, nonce)``."""
    return encode_packed([amount, nonce])


def decode_bid(data: bytes) -> tuple[int, int]:
    if len(data) != 64:
        raise Revert("reveal expects 64 bytes of arguments")
    return int.from_bytes(data[:32], "big"), int.from_bytes(data[32:], "big")


@dataclass(frozen=True)
class Invocation:
    caller: Address
    arguments: bytes
    tick: int


@register_contract
class SealedBidAuction(Contract):
    """Target stub: records every ``reveal`` call it receives."""

    KIND = "sealed_bid_auction"
    ENTRYPOINTS = {"reveal": "reveal"}

    def setup(self, msg: Msg) -> None:
        self.invocations: list[Invocation] = []
        self.revealed: list[tuple[int, int]] = []

    def reveal(self, msg: Msg, arguments: bytes) -> None:
        bid = decode_bid(arguments)
        self._append(self.invocations, Invocation(msg.sender, bytes(arguments), msg.tick))
        self._append(self.revealed, bid)


@register_contract
class ProxyContract(Contract):
    KIND = "proxy"
    ENTRYPOINTS = {
        "bindSchedule": "bind_schedule",
        "submitPrivkey": "submit_privkey",
        "submitOnion": "submit_onion",
        "execute": "execute",
    }

    def setup(self, msg: Msg, scheduler: Address, target: Address, selector: str) -> None:
        if not isinstance(self.ledger.contract(scheduler), SchedulerContract):
            raise Revert("scheduler address holds no scheduler")
        target_contract = self.ledger.contract(target)
        if selector not in target_contract.ENTRYPOINTS:
            raise Revert(f"target has no function {selector}")
        self.owner = msg.sender
        self.scheduler = Address(scheduler)
        self.target = Address(target)
        self.target_selector = selector
        self.sid: int | None = None
        self.submitted_privkeys: dict[int, bytes] = {}
        self.submitted_onions: dict[int, bytes] = {}
        self.executed = False
        self.executor: Address | None = None

    def _scheduler(self) -> SchedulerContract:
        return self.ledger.contract(self.scheduler)

    def _bound(self):
        if self.sid is None:
            raise Revert("proxy is not bound to a schedule")
        return self._scheduler().schedule(self.sid)

    def bind_schedule(self, msg: Msg, sid: int) -> None:
        if msg.sender != self.scheduler:
            raise Revert("only the scheduler binds a proxy")
        if msg.origin != self.owner:
            raise Revert("proxy belongs to a different user")
        if self.sid is not None:
            raise Revert("proxy already bound")
        self._set("sid", sid)

    def _identify(self, msg: Msg, tid: int, nonce: bytes | None) -> None:
        sched = self._scheduler()
        if sched.phase(self.sid) is not Phase.SUBMISSION:
            raise Revert("submissions are accepted only in the submission half")
        if nonce is not None:
            self.ledger.call(self.address, self.scheduler, "verifyIdentity", (self.sid, tid, nonce))
        if sched.bound_tid(self.sid, msg.sender) != tid:
            raise Revert("sender is not bound to this slot")

    def submit_privkey(self, msg: Msg, tid: int, private_key: bytes, nonce: bytes | None = None) -> None:
        rec = self._bound()
        if not 0 <= tid < rec.first_round:
            raise Revert("private keys come from first-round slots only")
        if tid in self.submitted_privkeys:
            raise Revert("key already submitted")
        if len(private_key) != 32:
            raise Revert("private key must be 32 bytes")
        self._identify(msg, tid, nonce)
        self._put(self.submitted_privkeys, tid, bytes(private_key))
        self._checkpoint("submitPrivkey:stored")
        self.ledger.call(self.address, self.scheduler, "noteSubmission", (self.sid, tid, bytes(private_key)))

    def submit_onion(self, msg: Msg, tid: int, onion: bytes, nonce: bytes | None = None) -> None:
        rec = self._bound()
        if not rec.first_round <= tid < rec.slots:
            raise Revert("onions come from second-round slots only")
        if tid in self.submitted_onions:
            raise Revert("onion already submitted")
        if hash256(onion) != rec.onion_commitments[tid - rec.first_round]:
            raise Revert("onion does not match its commitment")
        self._identify(msg, tid, nonce)
        self._put(self.submitted_onions, tid, bytes(onion))
        self._checkpoint("submitOnion:stored")
        self.ledger.call(self.address, self.scheduler, "noteSubmission", (self.sid, tid, None))

    def execute(self, msg: Msg, inputs: bytes, nonce: bytes) -> None:
        rec = self._bound()
        sched = self._scheduler()
        if self.executed:
            raise Revert("already executed")
        if sched.phase(self.sid) is not Phase.EXECUTION:
            raise Revert("execute is only allowed in the execution half")
        if sched.bound_tid(self.sid, msg.sender) is None:
            raise Revert("only identity-bound trustees may execute")
        if commit([bytes(inputs), bytes(nonce)]) != rec.input_commitment:
            raise Revert("inputs do not match the commitment")
        self._set("executed", True)
        self._set("executor", msg.sender)
        self._checkpoint("execute:flagged")
        self.ledger.call(self.address, self.target, self.target_selector, (bytes(inputs),))
        self._checkpoint("execute:target_called")
        self.ledger.call(self.address, self.scheduler, "withdrawPermission", (self.sid, msg.sender))
