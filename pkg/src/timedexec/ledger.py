"""Deterministic simulated chain: accounts, balances, logical time, transactions.

Contracts are Python objects registered by kind. All contract writes go
through the ledger's undo journal so a failing transaction (including any
internal contract-to-contract messages it triggered) leaves no trace.
"""

from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass
from typing import Any, Callable, ClassVar, Iterable

from .crypto import Address, encode_packed, hash256

__all__ = [
    "Revert",
    "LedgerError",
    "ForcedFailure",
    "TimeWindow",
    "Account",
    "SimTransaction",
    "Msg",
    "Contract",
    "LedgerState",
    "register_contract",
    "genesis",
    "replay",
    "canonical_json",
    "TRACE_HEADER",
]

TRACE_HEADER = "tick,sender,target,function,status"


class LedgerError(Exception):
    """Misuse of the ledger itself (bad genesis, time regression)."""


class Revert(Exception):
    """A transaction was rejected; no state changed."""


class ForcedFailure(Exception):
    """Raised by a fault injector inside a contract step."""


@dataclass(frozen=True)
class TimeWindow:
    start: int
    end: int

    def __post_init__(self) -> None:
        if not isinstance(self.start, int) or not isinstance(self.end, int):
            raise ValueError("window bounds must be integer ticks")
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid window [{self.start}, {self.end})")

    def __contains__(self, tick: int) -> bool:
        return self.start <= tick < self.end

    def covers(self, other: "TimeWindow") -> bool:
        return self.start <= other.start and other.end <= self.end

    @property
    def midpoint(self) -> int:
        return self.start + (self.end - self.start) // 2


@dataclass
class Account:
    kind: str  # "eoa" | "contract"
    balance: int = 0
    contract: "Contract | None" = None
    creations: int = 0


@dataclass(frozen=True)
class SimTransaction:
    sender: Address
    target: Address | None  # None deploys a contract
    function: str
    args: tuple = ()
    value: int = 0
    tick: int = 0


@dataclass(frozen=True)
class Msg:
    sender: Address
    origin: Address
    value: int
    tick: int


_REGISTRY: dict[str, type["Contract"]] = {}


def register_contract(cls: type["Contract"]) -> type["Contract"]:
    _REGISTRY[cls.KIND] = cls
    return cls


class Contract:
    """Base class for simulated contracts.

    Subclasses map external function names to method names in
    ``ENTRYPOINTS``; every method receives the call ``Msg`` first.
    Mutations must go through ``_set``/``_put``/``_append`` or
    ``ledger.transfer`` so they can be rolled back.
    """

    KIND: ClassVar[str] = "contract"
    ENTRYPOINTS: ClassVar[dict[str, str]] = {}

    def __init__(self, ledger: "LedgerState", address: Address, creator: Address) -> None:
        self.ledger = ledger
        self.address = address
        self.creator = creator

    def setup(self, msg: Msg, *args: Any) -> None:
        if args:
            raise Revert(f"{self.KIND}: unexpected constructor arguments")

    def dispatch(self, msg: Msg, function: str, args: tuple) -> Any:
        method = self.ENTRYPOINTS.get(function)
        if method is None:
            raise Revert(f"{self.KIND}: unknown function {function}")
        return getattr(self, method)(msg, *args)

    # journaled writes
    def _set(self, attr: str, value: Any) -> None:
        self.ledger.journal_set(self, attr, value)

    def _put(self, mapping: dict, key: Any, value: Any) -> None:
        self.ledger.journal_put(mapping, key, value)

    def _append(self, seq: list, item: Any) -> None:
        self.ledger.journal_append(seq, item)

    def _checkpoint(self, label: str) -> None:
        self.ledger.checkpoint(f"{self.KIND}.{label}")

    def state(self) -> dict:
        """Publicly visible storage, used for the canonical state hash."""
        return {
            k: v
            for k, v in vars(self).items()
            if k not in ("ledger",) and not k.startswith("_")
        }


_MISSING = object()


class LedgerState:
    def __init__(self) -> None:
        self.accounts: dict[Address, Account] = {}
        self.clock = 0
        self.tx_log: list[SimTransaction] = []
        self.revert_log: list[tuple[SimTransaction, str]] = []
        self.history: list[tuple[SimTransaction, str]] = []
        self.genesis_balances: tuple[tuple[Address, int], ...] = ()
        self.fault_injector: Callable[[str], None] | None = None
        self._journal: list[Callable[[], None]] | None = None
        self._origin: Address | None = None

    # -- construction ---------------------------------------------------

    @classmethod
    def genesis(cls, accounts: Iterable[tuple[Address, int]]) -> "LedgerState":
        state = cls()
        entries = [(Address(a), int(b)) for a, b in accounts]
        for addr, balance in entries:
            if addr in state.accounts:
                raise LedgerError(f"duplicate genesis address {addr}")
            if balance < 0:
                raise LedgerError("negative genesis balance")
            state.accounts[addr] = Account("eoa", balance)
        state.genesis_balances = tuple(entries)
        return state

    # -- queries ----------------------------------------------------------

    def balance(self, address: Address) -> int:
        acct = self.accounts.get(address)
        return acct.balance if acct else 0

    def total_supply(self) -> int:
        return sum(a.balance for a in self.accounts.values())

    def contract(self, address: Address) -> Contract:
        acct = self.accounts.get(address)
        if acct is None or acct.contract is None:
            raise Revert(f"no contract at {address}")
        return acct.contract

    def invocation_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for tx in self.tx_log:
            counts[tx.function] = counts.get(tx.function, 0) + 1
        return counts

    # -- time ---------------------------------------------------------------

    def advance_time(self, to: int) -> "LedgerState":
        if to < self.clock:
            raise LedgerError(f"time regression {self.clock} -> {to}")
        self.clock = to
        return self

    # -- journal --------------------------------------------------------------

    def _record(self, undo: Callable[[], None]) -> None:
        if self._journal is None:
            raise LedgerError("state writes are only allowed inside a transaction")
        self._journal.append(undo)

    def journal_set(self, obj: Any, attr: str, value: Any) -> None:
        old = getattr(obj, attr)
        self._record(lambda: setattr(obj, attr, old))
        setattr(obj, attr, value)

    def journal_put(self, mapping: dict, key: Any, value: Any) -> None:
        old = mapping.get(key, _MISSING)
        if old is _MISSING:
            self._record(lambda: mapping.pop(key, None))
        else:
            self._record(lambda: mapping.__setitem__(key, old))
        mapping[key] = value

    def journal_append(self, seq: list, item: Any) -> None:
        self._record(seq.pop)
        seq.append(item)

    def checkpoint(self, label: str) -> None:
        if self.fault_injector is not None:
            self.fault_injector(label)

    def transfer(self, src: Address, dst: Address, amount: int) -> None:
        if amount < 0:
            raise Revert("negative transfer")
        if amount == 0:
            return
        source = self.accounts.get(src)
        if source is None or source.balance < amount:
            raise Revert(f"insufficient balance at {src}")
        if dst not in self.accounts:
            self.journal_put(self.accounts, dst, Account("eoa"))
        dest = self.accounts[dst]
        self.journal_set(source, "balance", source.balance - amount)
        self.journal_set(dest, "balance", dest.balance + amount)

    # -- execution --------------------------------------------------------------

    def _deploy(self, creator: Address, kind: str, args: tuple, value: int) -> Address:
        cls = _REGISTRY.get(kind)
        if cls is None:
            raise Revert(f"unknown contract kind {kind}")
        account = self.accounts[creator]
        address = Address(hash256(encode_packed([creator, account.creations]))[-20:])
        self.journal_set(account, "creations", account.creations + 1)
        contract = cls(self, address, creator)
        self.journal_put(self.accounts, address, Account("contract", 0, contract))
        self.transfer(creator, address, value)
        contract.setup(Msg(creator, self._origin or creator, value, self.clock), *args)
        return address

    def call(self, caller: Address, target: Address, function: str, args: tuple = (), value: int = 0) -> Any:
        """Internal message from a contract; runs inside the current transaction."""
        if self._journal is None:
            raise LedgerError("internal calls need an active transaction")
        contract = self.contract(target)
        self.transfer(caller, target, value)
        msg = Msg(caller, self._origin or caller, value, self.clock)
        return contract.dispatch(msg, function, args)

    def apply_transaction(self, tx: SimTransaction) -> Any:
        """Apply ``tx`` atomically and return the call's result.

        Any failure rolls back every write and raises ``Revert``.
        """
        if tx.tick != self.clock:
            raise LedgerError(f"transaction tick {tx.tick} != clock {self.clock}")
        if self._journal is not None:
            raise LedgerError("nested transaction")
        self._journal = []
        self._origin = tx.sender
        try:
            sender = self.accounts.get(tx.sender)
            if sender is None or sender.kind != "eoa":
                raise Revert("unknown sender")
            if tx.value < 0 or sender.balance < tx.value:
                raise Revert("sender underfunded")
            if tx.target is None:
                if tx.function != "deploy" or not tx.args:
                    raise Revert("contract creation needs a kind")
                result = self._deploy(tx.sender, tx.args[0], tuple(tx.args[1:]), tx.value)
            else:
                target = self.accounts.get(tx.target)
                if target is None and tx.function != "transfer":
                    raise Revert("unknown target")
                if target is None or target.contract is None:
                    if tx.function != "transfer":
                        raise Revert("EOAs only accept plain transfers")
                    self.transfer(tx.sender, tx.target, tx.value)
                    result = None
                else:
                    self.transfer(tx.sender, tx.target, tx.value)
                    msg = Msg(tx.sender, tx.sender, tx.value, self.clock)
                    result = target.contract.dispatch(msg, tx.function, tuple(tx.args))
        except Exception as exc:
            for undo in reversed(self._journal):
                undo()
            self._journal = None
            self._origin = None
            reason = str(exc) or type(exc).__name__
            self.revert_log.append((tx, reason))
            self.history.append((tx, "revert"))
            if isinstance(exc, Revert):
                raise
            raise Revert(reason) from exc
        self._journal = None
        self._origin = None
        self.tx_log.append(tx)
        self.history.append((tx, "ok"))
        return result

    def submit(self, sender: Address, target: Address | None, function: str, *args, value: int = 0) -> Any:
        """Convenience wrapper building a transaction at the current tick."""
        return self.apply_transaction(SimTransaction(sender, target, function, tuple(args), value, self.clock))

    # -- encodings ----------------------------------------------------------------

    def encode(self) -> bytes:
        accounts = []
        for addr in sorted(self.accounts):
            acct = self.accounts[addr]
            entry = {"address": addr, "kind": acct.kind, "balance": acct.balance, "creations": acct.creations}
            if acct.contract is not None:
                entry["contract"] = {"kind": acct.contract.KIND, "state": acct.contract.state()}
            accounts.append(entry)
        return canonical_json({"clock": self.clock, "accounts": accounts}).encode()

    def state_hash(self) -> bytes:
        return hash256(self.encode())

    @property
    def submitted(self) -> list[SimTransaction]:
        """Every transaction offered to the ledger, including reverted ones."""
        return [tx for tx, _ in self.history]

    def trace_lines(self) -> list[str]:
        lines = [TRACE_HEADER]
        for tx, status in self.history:
            target = "" if tx.target is None else str(tx.target)
            lines.append(f"{tx.tick},{tx.sender},{target},{tx.function},{status}")
        return lines


def genesis(accounts: Iterable[tuple[Address, int]]) -> LedgerState:
    return LedgerState.genesis(accounts)


def replay(
    genesis_balances: Iterable[tuple[Address, int]],
    transactions: Iterable[SimTransaction],
    clock: int | None = None,
) -> LedgerState:
    """Rebuild a ledger by re-applying transactions in order.

    Pass ``tx_log`` to rebuild the state, or ``submitted`` to rebuild the trace
    as well; transactions that reverted originally revert again and are logged
    the same way.  Failures forced through ``fault_injector`` are not replayed.
    """
    state = LedgerState.genesis(genesis_balances)
    for tx in transactions:
        state.advance_time(tx.tick)
        try:
            state.apply_transaction(tx)
        except Revert:
            pass
    if clock is not None:
        state.advance_time(clock)
    return state


def _plain(obj: Any) -> Any:
    if isinstance(obj, Contract):
        return {"contract_at": str(obj.address)}
    if isinstance(obj, (bytes, bytearray)):
        return "0x" + bytes(obj).hex()
    if isinstance(obj, enum.Enum):
        return obj.value
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        items = [(json.dumps(_plain(k), sort_keys=True), _plain(v)) for k, v in obj.items()]
        return [[k, v] for k, v in sorted(items, key=lambda kv: kv[0])]
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted((_plain(v) for v in obj), key=lambda v: json.dumps(v, sort_keys=True))
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        return repr(obj)
    raise TypeError(f"no canonical form for {type(obj).__name__}")


def canonical_json(obj: Any) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))
