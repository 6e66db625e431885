import pytest

from timedexec.agents import reconstruct
from timedexec.crypto import hash256
from timedexec.ledger import ForcedFailure, Revert
from timedexec.proxy import decode_bid, encode_bid
from timedexec.scheduler import Phase

from .helpers import clean_revert, execute, proxy_send, send, stage_a, submit_all, to_execution, to_submission


def test_bid_encoding():
    assert decode_bid(encode_bid(1234, 99)) == (1234, 99)
    with pytest.raises(Revert):
        decode_bid(b"\x00" * 63)


def test_proxy_bound_to_schedule_and_distinct():
    stage = stage_a()
    rec = stage.world.scheduler.schedule(stage.sid)
    proxy = stage.world.proxy(stage.sid)
    assert proxy.sid == stage.sid and rec.proxy == proxy.address and proxy.owner == stage.user.address
    u = stage.user.address
    second = send(stage, u, None, "deploy", "proxy", stage.world.scheduler_address, stage.world.target_address, "reveal")
    assert second != proxy.address
    with clean_revert(stage):
        send(stage, u, None, "deploy", "proxy", stage.world.scheduler_address, stage.user.address, "reveal")
    with clean_revert(stage):
        send(stage, u, None, "deploy", "proxy", stage.world.scheduler_address, stage.world.target_address, "nope")
    with clean_revert(stage, "only the scheduler"):
        send(stage, u, second, "bindSchedule", 5)


def test_submit_privkey():
    stage = stage_a()
    sid = stage.sid
    t = stage.trustee_at(0)
    nonce = t.assignments[sid].nonce
    with clean_revert(stage):  # before the window opens
        proxy_send(stage, t.address, "submitPrivkey", 0, t.keypair.private_key, nonce)
    to_submission(stage)
    with clean_revert(stage, "first-round"):
        proxy_send(stage, t.address, "submitPrivkey", 12, t.keypair.private_key, nonce)
    with clean_revert(stage):
        proxy_send(stage, stage.trustee_at(1).address, "submitPrivkey", 0, t.keypair.private_key, nonce)
    proxy_send(stage, t.address, "submitPrivkey", 0, t.keypair.private_key, nonce)
    proxy = stage.world.proxy(sid)
    assert proxy.submitted_privkeys[0] == t.keypair.private_key
    assert stage.world.scheduler.slot(sid, 0).submitted_privkey == t.keypair.private_key
    with clean_revert(stage, "already"):
        proxy_send(stage, t.address, "submitPrivkey", 0, t.keypair.private_key, nonce)
    late = stage.trustee_at(1)
    to_execution(stage)
    with clean_revert(stage, "submission half"):
        proxy_send(stage, late.address, "submitPrivkey", 1, late.keypair.private_key, late.assignments[sid].nonce)


def test_submit_onion_hash_checked():
    stage = stage_a()
    sid = stage.sid
    t = stage.trustee_at(10)
    state = t.assignments[sid]
    to_submission(stage)
    flipped = bytes([state.onion[0] ^ 1]) + state.onion[1:]
    with clean_revert(stage, "commitment"):
        proxy_send(stage, t.address, "submitOnion", 10, flipped, state.nonce)
    with clean_revert(stage, "second-round"):
        proxy_send(stage, t.address, "submitOnion", 3, state.onion, state.nonce)
    proxy_send(stage, t.address, "submitOnion", 10, state.onion, state.nonce)
    assert hash256(stage.world.proxy(sid).submitted_onions[10]) == stage.world.scheduler.schedule(sid).onion_commitments[0]


def test_full_submissions_allow_reconstruction():
    stage = stage_a()
    to_submission(stage)
    submit_all(stage)
    to_execution(stage)
    inputs, sigs, nonce = reconstruct(stage.world, stage.sid)
    secrets = stage.user.schedules[stage.sid]
    assert inputs == secrets.inputs and nonce == secrets.nonce and sigs == secrets.signatures


def test_execute_reveals_exact_inputs_once():
    stage = stage_a()
    sid = stage.sid
    secrets = stage.user.schedules[sid]
    to_submission(stage)
    submit_all(stage)
    executor = stage.trustee_at(7)
    with clean_revert(stage, "execution half"):
        execute(stage, 7)
    to_execution(stage)
    with clean_revert(stage, "commitment"):
        proxy_send(stage, executor.address, "execute", secrets.inputs, bytes(32))
    with clean_revert(stage, "identity-bound"):
        proxy_send(stage, stage.user.address, "execute", secrets.inputs, secrets.nonce)
    execute(stage, 7)
    target = stage.ledger.contract(stage.world.target_address)
    assert len(target.invocations) == 1
    call = target.invocations[0]
    assert call.arguments == secrets.inputs and call.caller == stage.world.proxy(sid).address
    assert target.revealed == [decode_bid(secrets.inputs)]
    rec = stage.world.scheduler.schedule(sid)
    assert rec.phase is Phase.EXECUTED and rec.executor_tid == 7
    assert stage.world.proxy(sid).executed


def test_race_first_submitter_wins():
    stage = stage_a(seed=3)
    sid = stage.sid
    to_submission(stage)
    submit_all(stage)
    to_execution(stage)
    execute(stage, 2)
    with clean_revert(stage, "already executed"):
        execute(stage, 9)
    stage.ledger.advance_time(stage.config.execution_window.end)
    for tid in (2, 9):
        t = stage.trustee_at(tid)
        before = stage.ledger.balance(t.beneficiary)
        send(stage, t.address, stage.world.scheduler_address, "withdrawR", sid, tid)
        assert stage.ledger.balance(t.beneficiary) - before == (30 if tid == 2 else 10)


@pytest.mark.parametrize("label", ["proxy.execute:flagged", "proxy.execute:target_called"])
def test_execute_atomic_under_injected_failure(label):
    stage = stage_a()
    to_submission(stage)
    submit_all(stage)
    to_execution(stage)

    def injector(seen):
        if seen == label:
            raise ForcedFailure(seen)

    stage.ledger.fault_injector = injector
    with clean_revert(stage):
        execute(stage, 0)
    stage.ledger.fault_injector = None
    assert not stage.world.proxy(stage.sid).executed
    assert stage.world.scheduler.phase(stage.sid) is Phase.EXECUTION
    execute(stage, 0)
    assert stage.world.proxy(stage.sid).executed


def test_proxy_state_never_holds_inputs_before_execute():
    stage = stage_a(seed=6)
    secrets = stage.user.schedules[stage.sid]
    to_submission(stage)
    submit_all(stage)
    to_execution(stage)
    assert secrets.inputs.hex() not in stage.ledger.encode().decode()
    execute(stage, 0)
    assert secrets.inputs.hex() in stage.ledger.encode().decode()
