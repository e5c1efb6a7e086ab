"""Committed chain state: who may submit what, and block application."""

from __future__ import annotations

import pytest

from sugarchain.crypto import FAST_KDF
from sugarchain.errors import BadTransaction
from sugarchain.identity import build_registration, build_rotation
from sugarchain.ledger import build_transaction
from sugarchain.payloads import (
    DeliveryConfirmed,
    LotRegistered,
    PaymentSettled,
    QualityReport,
    QualityUpdate,
    Role,
    Transfer,
)
from sugarchain.state import ChainState
from conftest import RECOVERY


def lot_payload(qty=100, price=10):
    return LotRegistered(qty, "field", price, None, None)


def code_of(harness, key, payload):
    tx = build_transaction(key, payload, harness.now())
    violation = harness.state.validate_tx(tx)
    return None if violation is None else violation.code


def test_duplicate_registration_rejected(harness):
    farmer = harness.user("asha", Role.FARMER)
    _, payload = build_registration(
        "again", "again@x.example", "1", "longenough", Role.FARMER,
        [("a", "1"), ("b", "2"), ("c", "3")], kdf=FAST_KDF, rng=harness.rng,
    )
    tx = build_transaction(farmer, payload, harness.now())
    violation = harness.state.validate_tx(tx)
    assert violation is not None and violation.code == "AlreadyRegistered"


def test_only_farmers_open_lots(harness):
    mill = harness.user("mill", Role.SUGAR_MILL)
    assert code_of(harness, mill, lot_payload()) == "Unauthorized"
    farmer = harness.user("asha", Role.FARMER)
    assert code_of(harness, farmer, lot_payload()) is None


def test_unregistered_submitter_cannot_open_lot(harness):
    from sugarchain.crypto import SigningKey

    stranger = SigningKey.from_seed(b"\x77" * 32)
    assert code_of(harness, stranger, lot_payload()) == "Unauthorized"


def test_transfer_target_must_hold_next_role(harness):
    farmer = harness.user("asha", Role.FARMER)
    other_farmer = harness.user("badal", Role.FARMER)
    mill = harness.user("mill", Role.SUGAR_MILL)
    lot_tx = harness.submit(farmer, lot_payload())
    sideways = Transfer(lot_tx.tx_id, farmer.public_bytes,
                        other_farmer.public_bytes, 5)
    assert code_of(harness, farmer, sideways) == "IllegalTransition"
    forward = Transfer(lot_tx.tx_id, farmer.public_bytes, mill.public_bytes, 5)
    assert code_of(harness, farmer, forward) is None


def test_transfer_to_unregistered_target(harness):
    farmer = harness.user("asha", Role.FARMER)
    lot_tx = harness.submit(farmer, lot_payload())
    ghost = Transfer(lot_tx.tx_id, farmer.public_bytes, b"\x55" * 32, 5)
    assert code_of(harness, farmer, ghost) == "UnknownUser"


def test_transfer_must_be_signed_by_sender(harness):
    farmer = harness.user("asha", Role.FARMER)
    mill = harness.user("mill", Role.SUGAR_MILL)
    lot_tx = harness.submit(farmer, lot_payload())
    payload = Transfer(lot_tx.tx_id, farmer.public_bytes, mill.public_bytes, 5)
    assert code_of(harness, mill, payload) == "Unauthorized"


def test_delivery_only_by_receiver(harness):
    farmer = harness.user("asha", Role.FARMER)
    mill = harness.user("mill", Role.SUGAR_MILL)
    lot_tx = harness.submit(farmer, lot_payload())
    transfer_tx = harness.submit(
        farmer, Transfer(lot_tx.tx_id, farmer.public_bytes, mill.public_bytes, 5))
    payload = DeliveryConfirmed(lot_tx.tx_id, transfer_tx.tx_id)
    assert code_of(harness, farmer, payload) == "Unauthorized"
    assert code_of(harness, mill, payload) is None


def test_quality_by_custodian_or_any_mill(harness):
    farmer = harness.user("asha", Role.FARMER)
    mill = harness.user("mill", Role.SUGAR_MILL)
    dist = harness.user("dist", Role.DISTRIBUTOR)
    lot_tx = harness.submit(farmer, lot_payload())
    reading = QualityUpdate(lot_tx.tx_id, QualityReport("A", 110, False), None)
    assert code_of(harness, farmer, reading) is None  # custodian
    assert code_of(harness, mill, reading) is None  # mills audit anywhere
    assert code_of(harness, dist, reading) == "Unauthorized"


def test_settlement_by_payer_or_validator(manual_harness):
    h = manual_harness
    farmer = h.user("asha", Role.FARMER)
    mill = h.user("mill", Role.SUGAR_MILL)
    lot_tx = h.submit(farmer, lot_payload(qty=20, price=7))
    transfer_tx = h.submit(
        farmer, Transfer(lot_tx.tx_id, farmer.public_bytes, mill.public_bytes, 9))
    h.submit(mill, DeliveryConfirmed(lot_tx.tx_id, transfer_tx.tx_id))
    delivery_tx_id = h.state.lots[lot_tx.tx_id].legs[-1].delivery_tx_id
    payload = PaymentSettled(lot_tx.tx_id, delivery_tx_id,
                             mill.public_bytes, farmer.public_bytes, 20 * 9)
    assert code_of(h, farmer, payload) == "Unauthorized"  # payee cannot self-pay
    assert code_of(h, h.validator, payload) is None
    assert code_of(h, mill, payload) is None


def test_rotation_authorization(harness):
    farmer = harness.user("asha", Role.FARMER)
    intruder = harness.user("badal", Role.FARMER)
    record = harness.state.users[farmer.public_bytes].clone()
    rotation = build_rotation(
        record, [a for _, a in RECOVERY], "fresh-password", rng=harness.rng,
    )
    assert code_of(harness, intruder, rotation) == "Unauthorized"
    assert code_of(harness, harness.validator, rotation) is None
    assert code_of(harness, farmer, rotation) is None


def test_rotation_for_unknown_user(harness):
    farmer = harness.user("asha", Role.FARMER)
    record = harness.state.users[farmer.public_bytes].clone()
    record.user_id = b"\x42" * 32
    rotation = build_rotation(
        record, ["rex", "pune", "cane"], "fresh-password", rng=harness.rng)
    assert code_of(harness, harness.validator, rotation) == "UnknownUser"


def test_apply_block_rejects_invalid_member(harness):
    from sugarchain.ledger import build_block

    mill = harness.user("mill", Role.SUGAR_MILL)
    bad_tx = build_transaction(mill, lot_payload(), harness.now())
    block = build_block(harness.chain.height + 1, harness.chain.tip.block_hash,
                        (bad_tx,), harness.validator, harness.now())
    with pytest.raises(BadTransaction):
        harness.state.clone().apply_block(block)


def test_from_chain_rebuilds_identical_state(harness):
    farmer = harness.user("asha", Role.FARMER)
    mill = harness.user("mill", Role.SUGAR_MILL)
    lot_tx = harness.submit(farmer, lot_payload(qty=11, price=13))
    transfer_tx = harness.submit(
        farmer, Transfer(lot_tx.tx_id, farmer.public_bytes, mill.public_bytes, 17))
    harness.submit(mill, DeliveryConfirmed(lot_tx.tx_id, transfer_tx.tx_id))
    harness.settle_due()

    rebuilt = ChainState.from_chain(harness.chain, harness.state.rule)
    assert rebuilt.height == harness.state.height
    assert set(rebuilt.users) == set(harness.state.users)
    assert set(rebuilt.lots) == set(harness.state.lots)
    a = rebuilt.lots[lot_tx.tx_id]
    b = harness.state.lots[lot_tx.tx_id]
    assert a.custodian == b.custodian and a.legs[-1].settle_height == b.legs[-1].settle_height


def test_pending_settlements_only_in_auto_mode(harness, manual_harness):
    for h, expect in ((harness, 1), (manual_harness, 0)):
        farmer = h.user("asha", Role.FARMER)
        mill = h.user("mill", Role.SUGAR_MILL)
        lot_tx = h.submit(farmer, lot_payload())
        transfer_tx = h.submit(
            farmer, Transfer(lot_tx.tx_id, farmer.public_bytes, mill.public_bytes, 5))
        h.submit(mill, DeliveryConfirmed(lot_tx.tx_id, transfer_tx.tx_id))
        assert len(h.state.pending_settlements()) == expect


def test_validator_set_parsed_from_genesis(harness):
    assert harness.state.is_validator(harness.validator.public_bytes)
    assert not harness.state.is_validator(b"\x00" * 32)
