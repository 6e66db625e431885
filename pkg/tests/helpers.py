"""Shared scaffolding for contract-level tests built on a prepared scenario."""

from __future__ import annotations

import random
from contextlib import contextmanager

import pytest

from timedexec.adversary import Stage, prepare_scenario
from timedexec.agents import trustee_submission_step
from timedexec.config import instance_a
from timedexec.crypto import keypair_generate
from timedexec.ledger import LedgerState, Revert, TimeWindow
from timedexec.scheduler import required_payment

D = 100


def stage_a(seed: int = 0, **overrides) -> Stage:
    stage = prepare_scenario(instance_a(seed=seed, **overrides))
    assert stage.sid is not None, stage.failure
    return stage


def to_submission(stage: Stage) -> None:
    stage.ledger.advance_time(stage.config.execution_window.start)


def to_execution(stage: Stage) -> None:
    stage.ledger.advance_time(stage.config.execution_window.midpoint)


def submit_all(stage: Stage, skip: tuple[int, ...] = ()) -> None:
    for tid in range(stage.config.slots):
        if tid not in skip:
            assert trustee_submission_step(stage.world, stage.trustee_at(tid), stage.sid)


def send(stage: Stage, sender, target, function, *args, value=0):
    return stage.world.send(sender, target, function, *args, value=value)


def sched_send(stage: Stage, sender, function, *args, value=0):
    return send(stage, sender, stage.world.scheduler_address, function, *args, value=value)


def proxy_send(stage: Stage, sender, function, *args):
    return send(stage, sender, stage.world.proxy(stage.sid).address, function, *args)


def execute(stage: Stage, tid: int) -> None:
    secrets = stage.user.schedules[stage.sid]
    proxy_send(stage, stage.trustee_at(tid).address, "execute", secrets.inputs, secrets.nonce)


@contextmanager
def clean_revert(stage: Stage, match: str | None = None):
    """Expect a revert that leaves the ledger encoding untouched."""
    before = stage.ledger.encode()
    with pytest.raises(Revert, match=match):
        yield
    assert stage.ledger.encode() == before


class Bare:
    """Scheduler, target and a funded user on an otherwise empty ledger."""

    def __init__(self, candidates: int = 0, seed: int = 0):
        rng = random.Random(seed)
        self.deployer = keypair_generate(rng)
        self.user = keypair_generate(rng)
        self.keys = [keypair_generate(rng) for _ in range(candidates)]
        self.ledger = LedgerState.genesis(
            [(self.deployer.address, 0), (self.user.address, 10_000)] + [(k.address, 2 * D) for k in self.keys]
        )
        self.sched = self.ledger.submit(self.deployer.address, None, "deploy", "scheduler")
        self.target = self.ledger.submit(self.deployer.address, None, "deploy", "sealed_bid_auction")
        self.ledger.advance_time(1)

    @property
    def contract(self):
        return self.ledger.contract(self.sched)

    def apply(self, kp, value=D, window=TimeWindow(0, 50)):
        return self.ledger.submit(kp.address, self.sched, "newCandidate", kp.public_key, b"wk", window, kp.address, value=value)

    def schedule(self, m=2, n=5, l=3, w_e=TimeWindow(10, 20)):
        u = self.user.address
        if u not in self.contract.users:
            self.ledger.submit(u, self.sched, "newUser")
        proxy = self.ledger.submit(u, None, "deploy", "proxy", self.sched, self.target, "reveal")
        sid = self.ledger.submit(u, self.sched, "newSchedule", w_e, m, n, l, proxy, value=required_payment(n, l, 10, 20))
        return sid, proxy
