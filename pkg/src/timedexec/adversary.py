"""Misbehavior injection, watcher agents and the end-to-end scenario runner."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .agents import (
    IdentityLeak,
    KeyLeak,
    ScheduleError,
    ScheduleParams,
    Trustee,
    User,
    World,
    _is_fake,
    trustee_execution_flow,
    trustee_leak,
    trustee_submission_step,
    user_fallback_reports,
    user_schedule_flow,
)
from .config import ScenarioConfig
from .crypto import Address, CryptoError, commit, derive_pubkey, keypair_generate, pubkey_to_address
from .ledger import LedgerState, Revert, TimeWindow
from .policies import HONEST, Behavior, BehaviorPolicy
from .proxy import Invocation, encode_bid
from .scheduler import CandidateStatus, Phase, ReportRecord, required_payment

__all__ = [
    "Behavior",
    "BehaviorPolicy",
    "ScenarioOutcome",
    "assign_policies",
    "watcher_step",
    "run_scenario",
    "prepare_scenario",
    "Stage",
    "REPORT_GRACE",
]

# Ticks between the end of the execution window and candidates' working-window end.
REPORT_GRACE = 2


def assign_policies(agents: list[Trustee], config: ScenarioConfig, rng: random.Random) -> list[Trustee]:
    """Give every candidate one policy drawn from ``config.mix`` / ``config.p_im``."""
    mix = [(Behavior(k), p) for k, p in config.mix.items() if p > 0]
    for agent in agents:
        kind = None
        if mix:
            u = rng.random()
            acc = 0.0
            for behavior, prob in mix:
                acc += prob
                if u < acc:
                    kind = behavior
                    break
        if kind is not None:
            agent.policy = BehaviorPolicy(kind)
        elif config.p_im > 0:
            agent.policy = BehaviorPolicy(Behavior.INADVERTENT, config.p_im)
        else:
            agent.policy = HONEST
    return agents


def watcher_step(world: World, watcher: Address, sid: int) -> list[ReportRecord]:
    """File every report the watcher can prove from what it has observed."""
    sched = world.scheduler
    rec = sched.schedule(sid)
    tick = world.ledger.clock
    filed: list[ReportRecord] = []

    def attempt(function: str, *args) -> None:
        try:
            filed.append(world.send(watcher, world.scheduler_address, function, *args))
        except Revert:
            pass

    if not rec.trustee_commitments:
        return filed
    if tick < rec.w_e.start:
        for leak in world.bus.visible_to(watcher):
            if isinstance(leak, IdentityLeak) and leak.sid == sid:
                slot = sched.slots.get((sid, leak.tid))
                cand = sched.candidates.get(leak.address)
                if slot and cand and cand.status is CandidateStatus.ACTIVE:
                    if commit([leak.address, leak.nonce]) == slot.commitment:
                        attempt("identityReport", sid, leak.tid, leak.address, leak.nonce)
            elif isinstance(leak, KeyLeak) and leak.sid == sid:
                try:
                    public_key = derive_pubkey(leak.private_key)
                except CryptoError:
                    continue
                cand = sched.candidates.get(pubkey_to_address(public_key))
                if cand and cand.status is CandidateStatus.ACTIVE and cand.public_key == public_key:
                    attempt("advanceReport", sid, leak.tid, leak.private_key)
    elif tick >= rec.w_e.midpoint:
        for tid in range(rec.first_round):
            slot = sched.slot(sid, tid)
            if not slot.slashed and _is_fake(sched, slot):
                attempt("fakeReport", sid, tid)
    return filed


@dataclass
class ScenarioOutcome:
    """Observable result of one scenario; ledger-derived views are computed on demand."""

    executed: bool
    phase: Phase
    slashes: list[ReportRecord]
    target_log: list[Invocation]
    seed: int
    ledger: LedgerState = field(repr=False, compare=False)
    inputs: bytes = b""
    failure: str | None = None
    world: World | None = field(default=None, repr=False, compare=False)

    @property
    def balances(self) -> dict[Address, int]:
        return {addr: acct.balance for addr, acct in self.ledger.accounts.items()}

    @property
    def state_hash(self) -> bytes:
        return self.ledger.state_hash()

    @property
    def invocation_counts(self) -> dict[str, int]:
        return self.ledger.invocation_counts()

    @property
    def trace(self) -> list[str]:
        return self.ledger.trace_lines()

    def to_record(self) -> dict:
        return {
            "seed": self.seed,
            "executed": self.executed,
            "phase": self.phase.value,
            "failure": self.failure,
            "slashes": [
                {
                    "kind": r.kind.value,
                    "reporter": str(r.reporter),
                    "violator": str(r.violator),
                    "sid": r.sid,
                    "tid": r.tid,
                    "award": r.award,
                    "refund": r.refund,
                    "tick": r.tick,
                }
                for r in self.slashes
            ],
            "target_calls": [
                {"caller": str(i.caller), "arguments": "0x" + i.arguments.hex(), "tick": i.tick} for i in self.target_log
            ],
            "invocation_counts": dict(sorted(self.invocation_counts.items())),
            "state_hash": "0x" + self.state_hash.hex(),
        }


@dataclass
class Stage:
    """A scenario after setup: contracts deployed, pool filled, schedule armed."""

    config: ScenarioConfig
    world: World
    user: User
    watcher: Address
    trustees: list[Trustee]
    working: TimeWindow
    inputs: bytes
    sid: int | None
    failure: str | None = None

    @property
    def ledger(self) -> LedgerState:
        return self.world.ledger

    def serving(self) -> list[Trustee]:
        if self.sid is None:
            return []
        return [self.world.trustees[a] for a in self.user.schedules[self.sid].trustees]

    def trustee_at(self, tid: int) -> Trustee:
        return self.world.trustees[self.user.schedules[self.sid].trustees[tid]]


def prepare_scenario(config: ScenarioConfig) -> Stage:
    """Genesis, deployments, candidate applications and the user's schedule flow."""
    rng = random.Random(config.seed)
    w_e = config.execution_window
    w_s = config.setup_window
    payment = required_payment(config.n, config.l, config.trustee_reward, config.executor_bonus)

    deployer = keypair_generate(rng)
    user = User(keypair_generate(rng))
    watcher = keypair_generate(rng)
    working = TimeWindow(0, w_e.end + REPORT_GRACE)
    trustees = [
        Trustee(keypair_generate(rng), Address(rng.randbytes(20)), rng.randbytes(32), working)
        for _ in range(config.pool_size)
    ]
    ledger = LedgerState.genesis(
        [(deployer.address, 0), (user.address, payment), (watcher.address, 0)]
        + [(t.address, config.deposit) for t in trustees]
    )
    sched_addr = ledger.submit(
        deployer.address, None, "deploy", "scheduler", config.deposit, config.trustee_reward, config.executor_bonus
    )
    target_addr = ledger.submit(deployer.address, None, "deploy", "sealed_bid_auction")
    world = World(ledger, sched_addr, target_addr, rng, trustees={t.address: t for t in trustees})
    assign_policies(trustees, config, rng)

    ledger.advance_time(w_s.start)
    for t in trustees:
        t.apply(world, config.deposit)
    world.send(user.address, sched_addr, "newUser")
    inputs = encode_bid(rng.randrange(1, 10**6), rng.getrandbits(64))
    stage = Stage(config, world, user, watcher.address, trustees, working, inputs, None)
    try:
        stage.sid = user_schedule_flow(world, user, ScheduleParams(inputs, w_e, config.m, config.n, config.l))
    except (ScheduleError, Revert) as exc:
        stage.failure = f"{type(exc).__name__}: {exc}"
    if stage.sid is not None:
        for tid, kind in sorted(config.slot_policies.items()):
            trustee = stage.trustee_at(tid)
            trustee.policy = BehaviorPolicy(kind, config.p_im)
            trustee.assignments[stage.sid].policy = trustee.policy
    return stage


def run_scenario(config: ScenarioConfig) -> ScenarioOutcome:
    """Apply, schedule, execute and settle one schedule on a fresh ledger."""
    stage = prepare_scenario(config)
    world, user, sid = stage.world, stage.user, stage.sid
    ledger, rng = world.ledger, world.rng
    w_e, w_s = config.execution_window, config.setup_window
    watcher, sched_addr = stage.watcher, world.scheduler_address

    if sid is not None:
        serving = stage.serving()

        ledger.advance_time(w_s.start + 1)
        for t in serving:
            trustee_leak(world, t, sid)
        watcher_step(world, watcher, sid)

        ledger.advance_time(w_e.start)
        for t in sorted(serving, key=lambda t: t.assignments[sid].tid):
            state = t.assignments[sid]
            state.policy = state.policy.resolve(rng)
        for t in rng.sample(serving, len(serving)):
            trustee_submission_step(world, t, sid)

        ledger.advance_time(w_e.midpoint)
        for t in rng.sample(serving, len(serving)):
            trustee_execution_flow(world, t, sid)
        watcher_step(world, watcher, sid)

        ledger.advance_time(w_e.end - 1)
        user_fallback_reports(world, user, sid)

        ledger.advance_time(w_e.end)
        sched = world.scheduler
        for t in serving:
            tid = sched.bound_tid(sid, t.address)
            if tid is None:
                continue
            try:
                world.send(t.address, sched_addr, "withdrawR", sid, tid)
            except Revert:
                pass

    ledger.advance_time(stage.working.end)
    sched = world.scheduler
    for t in stage.trustees:
        if sched.candidates.get(t.address) and sched.candidates[t.address].status is CandidateStatus.ACTIVE:
            try:
                world.send(t.address, sched_addr, "withdrawD")
            except Revert:
                pass
    reporters = sorted({r.reporter for r in sched.reports})
    for who in reporters:
        try:
            world.send(who, sched_addr, "withdrawA")
        except Revert:
            pass

    target = ledger.contract(world.target_address)
    phase = sched.phase(sid) if sid is not None else Phase.REGISTERED
    return ScenarioOutcome(
        executed=bool(target.invocations),
        phase=phase,
        slashes=list(sched.reports),
        target_log=list(target.invocations),
        seed=config.seed,
        ledger=ledger,
        inputs=stage.inputs,
        failure=stage.failure,
        world=world,
    )
