"""Node lifecycle: config parsing, init, commit pipeline, persistence, recovery.

These tests drive SugarNode the way the API and CLI do, over a real data_dir,
with an injected clock so nothing depends on wall time.
"""

from __future__ import annotations

import base64
from dataclasses import replace
from pathlib import Path
from random import Random

import pytest

from sugarchain.crypto import FAST_KDF
from sugarchain.errors import (
    BadPassword,
    BadTransaction,
    ConfigInvalid,
    CorruptStore,
    RecoveryFailed,
    Unauthorized,
    UnknownUser,
)
from sugarchain.identity import build_registration
from sugarchain.ledger import append_block, build_transaction
from sugarchain.node import (
    NodeConfig,
    SugarNode,
    init_node,
    load_key,
    load_node_config,
    parse_node_config,
)
from sugarchain.consensus import propose_block
from sugarchain.payloads import (
    DeliveryConfirmed,
    LotRegistered,
    PaymentSettled,
    Role,
    Transfer,
)
from sugarchain.state import ChainState
from sugarchain.store import BlockStore
from sugarchain.supplychain import SettlementMode

from conftest import RECOVERY, NodeBox


@pytest.fixture
def box(tmp_path) -> NodeBox:
    return NodeBox(tmp_path)


# -- config ----------------------------------------------------------------


def test_parse_config_full_layering(tmp_path):
    text = """
    # node settings
    data_dir = {dir}
    listen_address = 0.0.0.0:9000
    chain_id = mainline
    session_ttl_minutes = 15

    settlement_mode = manual  # operators settle by hand
    max_block_lag = 3
    kdf_profile = fast
    """.format(dir=tmp_path / "d")
    config = parse_node_config(text)
    assert config.data_dir == tmp_path / "d"
    assert (config.host, config.port) == ("0.0.0.0", 9000)
    assert config.chain_id == "mainline"
    assert config.session_ttl_minutes == 15
    assert config.settlement.mode is SettlementMode.MANUAL
    assert config.settlement.max_block_lag == 3
    assert config.kdf is FAST_KDF


@pytest.mark.parametrize(
    "line",
    [
        "colour = blue",
        "data_dir",
        "session_ttl_minutes = soon",
        "settlement_mode = eventually",
        "max_block_lag = -",
    ],
)
def test_parse_config_rejects_bad_lines(line):
    with pytest.raises(ConfigInvalid, match="line 1"):
        parse_node_config(line)


@pytest.mark.parametrize(
    "text",
    [
        "session_ttl_minutes = 0",
        "listen_address = nocolon",
        "listen_address = host:",
        "kdf_profile = argon2",
    ],
)
def test_parse_config_rejects_bad_values(text):
    with pytest.raises(ConfigInvalid):
        parse_node_config(text)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigInvalid, match="cannot read config"):
        load_node_config(tmp_path / "absent.conf")


def test_load_config_none_gives_defaults():
    config = load_node_config(None)
    assert config.data_dir == Path("sugarchain-data")
    assert config.settlement.mode is SettlementMode.AUTO


# -- init ------------------------------------------------------------------


def test_init_writes_key_and_genesis(tmp_path):
    config = NodeConfig(data_dir=tmp_path / "data", chain_id="inittest")
    chain = init_node(config, rng=Random("init"))
    assert chain.height == 0
    key_path = config.validator_key_path
    assert key_path.read_text().strip() == load_key(key_path).seed_bytes().hex()
    assert key_path.stat().st_mode & 0o777 == 0o600
    assert BlockStore(config.data_dir).exists()


def test_init_refuses_existing_store(tmp_path):
    config = NodeConfig(data_dir=tmp_path / "data")
    init_node(config, rng=Random("again"))
    with pytest.raises(ConfigInvalid, match="refusing to reinitialize"):
        init_node(config, rng=Random("again"))


def test_init_reuses_existing_key(tmp_path):
    key_path = tmp_path / "shared.key"
    first = NodeConfig(data_dir=tmp_path / "a", validator_key=key_path)
    second = NodeConfig(data_dir=tmp_path / "b", validator_key=key_path)
    chain_a = init_node(first, rng=Random("a"))
    chain_b = init_node(second, rng=Random("b"))
    assert chain_a.tip.proposer == chain_b.tip.proposer


def test_node_requires_init(tmp_path):
    with pytest.raises(CorruptStore, match="run init first"):
        SugarNode(NodeConfig(data_dir=tmp_path / "empty"))


# -- identity flows --------------------------------------------------------


def test_register_then_login(box):
    key, tx = box.register("asha", Role.FARMER)
    assert box.node.chain.height == 1
    assert box.node.chain.has_tx(tx.tx_id)
    session = box.node.login(key.user_id, "pw-asha-test")
    assert box.node.sessions.validate(session.token).user_id == key.public_bytes
    with pytest.raises(BadPassword):
        box.node.login(key.user_id, "pw-wrong")


def test_login_unknown_user(box):
    with pytest.raises(UnknownUser):
        box.node.login("ab" * 32, "pw")
    with pytest.raises(UnknownUser):
        box.node.login("not-even-hex", "pw")


def test_recovery_rotates_credentials(box):
    key, _ = box.register("meera", Role.FARMER)
    user_id = key.user_id
    height_before = box.node.chain.height
    with pytest.raises(RecoveryFailed):
        box.node.recover(user_id, ["rex", "nashik", "cane"], "pw-new-rotated", rng=box.rng)
    assert box.node.chain.height == height_before  # nothing committed on failure
    session = box.node.recover(user_id, ["rex", "pune", "cane"], "pw-new-rotated", rng=box.rng)
    assert box.node.sessions.validate(session.token).user_id == key.public_bytes
    assert box.node.chain.height == height_before + 1
    with pytest.raises(BadPassword):
        box.node.login(user_id, "pw-meera-test")
    box.node.login(user_id, "pw-new-rotated")


def test_session_expiry_follows_injected_clock(box):
    key, _ = box.register("dev", Role.FARMER)
    session = box.node.login(key.user_id, "pw-dev-test")
    box.tick(box.config.session_ttl_minutes * 60 + 1)
    from sugarchain.errors import SessionExpired

    with pytest.raises(SessionExpired):
        box.node.sessions.validate(session.token)


# -- commit pipeline -------------------------------------------------------


def custody_flow(box):
    farmer, _ = box.register("farmer", Role.FARMER)
    mill, _ = box.register("mill", Role.SUGAR_MILL)
    _, settled = box.submit(
        farmer, LotRegistered(quantity_kg=1200, farm_location="Kolhapur", price_paise_per_kg=250)
    )
    assert settled == []
    lot_id = next(iter(box.node.state.lots))
    box.submit(
        farmer,
        Transfer(
            lot_id=lot_id, actor_from=farmer.public_bytes, actor_to=mill.public_bytes, price_paise_per_kg=250
        ),
    )
    transfer_tx_id = box.node.state.lots[lot_id].pending_transfer.transfer_tx_id
    return farmer, mill, lot_id, transfer_tx_id


def test_delivery_settles_in_next_block(box):
    farmer, mill, lot_id, transfer_tx_id = custody_flow(box)
    block, settled = box.submit(
        mill, DeliveryConfirmed(lot_id=lot_id, transfer_tx_id=transfer_tx_id)
    )
    assert [b.height for b in settled] == [block.height + 1]
    payment = settled[0].transactions[0].payload
    assert isinstance(payment, PaymentSettled)
    assert payment.amount_paise == 1200 * 250
    assert (payment.payer, payment.payee) == (mill.public_bytes, farmer.public_bytes)
    lot = box.node.state.lots[lot_id]
    assert lot.custodian == mill.public_bytes
    assert lot.outstanding_payment is None
    assert box.node.state.pending_settlements() == []


def test_manual_mode_waits_for_payer(tmp_path):
    box = NodeBox(tmp_path, mode=SettlementMode.MANUAL)
    farmer, mill, lot_id, transfer_tx_id = custody_flow(box)
    _, settled = box.submit(mill, DeliveryConfirmed(lot_id=lot_id, transfer_tx_id=transfer_tx_id))
    assert settled == []
    leg = box.node.state.lots[lot_id].legs[-1]
    assert leg.settled_amount is None
    box.submit(
        mill,
        PaymentSettled(
            lot_id=lot_id,
            delivery_tx_id=leg.delivery_tx_id,
            payer=mill.public_bytes,
            payee=farmer.public_bytes,
            amount_paise=1200 * 250,
        ),
    )
    assert box.node.state.lots[lot_id].legs[-1].settled_amount == 1200 * 250


def test_duplicate_submission_rejected(box):
    farmer, _ = box.register("dup", Role.FARMER)
    tx = build_transaction(
        farmer,
        LotRegistered(quantity_kg=10, farm_location="Pune", price_paise_per_kg=100),
        box.node.now_ms(),
    )
    box.node.submit(tx)
    with pytest.raises(BadTransaction, match="already committed"):
        box.node.submit(tx)


def test_unregistered_submitter_rejected(box):
    stranger = build_registration(
        "ghost", "g@x.example", "9800000002", "pw-ghost-test", Role.FARMER, RECOVERY, kdf=FAST_KDF
    )[0]
    tx = build_transaction(
        stranger,
        LotRegistered(quantity_kg=10, farm_location="Pune", price_paise_per_kg=100),
        box.node.now_ms(),
    )
    height = box.node.chain.height
    with pytest.raises(Unauthorized):  # violations surface under their own code
        box.node.submit(tx)
    assert box.node.chain.height == height


def test_node_without_validator_key_reads_but_cannot_commit(box, tmp_path):
    key, _ = box.register("reader", Role.FARMER)
    readonly = replace(box.config, validator_key=tmp_path / "absent.key")
    node = SugarNode(readonly, clock=lambda: box.now[0])
    assert node.validator is None
    assert node.chain.height == box.node.chain.height
    tx = build_transaction(
        key,
        LotRegistered(quantity_kg=5, farm_location="Pune", price_paise_per_kg=90),
        node.now_ms(),
    )
    with pytest.raises(ConfigInvalid, match="no validator key"):
        node.submit(tx)


# -- persistence -----------------------------------------------------------


def test_reload_round_trip(box):
    farmer, mill, lot_id, transfer_tx_id = custody_flow(box)
    box.submit(mill, DeliveryConfirmed(lot_id=lot_id, transfer_tx_id=transfer_tx_id))
    tip = box.node.chain.tip.block_hash
    height = box.node.chain.height
    reloaded = box.reopen()
    assert reloaded.chain.height == height
    assert reloaded.chain.tip.block_hash == tip
    assert reloaded.load_warning is None
    assert reloaded.state.lots[lot_id].custodian == mill.public_bytes


def test_crash_before_settlement_block_heals_on_start(tmp_path):
    """A store ending in an unsettled delivery gets its payment block at startup."""
    config = NodeConfig(
        data_dir=tmp_path / "data", chain_id="healtest", kdf_profile="fast"
    )
    rng = Random("heal")
    chain = init_node(config, rng=rng)
    key = load_key(config.validator_key_path)
    state = ChainState.from_chain(chain, config.settlement)
    store = BlockStore(config.data_dir)
    ts = [1_000]

    def commit(signer, payload):
        ts[0] += 50
        tx = build_transaction(signer, payload, ts[0])
        block, audit = propose_block(chain, state, [tx], key, ts[0])
        assert not audit
        append_block(chain, block)
        state.apply_block(block)
        store.append(block)
        return tx

    farmer, reg_f = build_registration(
        "hf", "hf@x.example", "9811111111", "pw-hf-test", Role.FARMER, RECOVERY, kdf=FAST_KDF, rng=rng
    )
    mill, reg_m = build_registration(
        "hm", "hm@x.example", "9822222222", "pw-hm-test", Role.SUGAR_MILL, RECOVERY, kdf=FAST_KDF, rng=rng
    )
    commit(farmer, reg_f)
    commit(mill, reg_m)
    lot_tx = commit(
        farmer, LotRegistered(quantity_kg=800, farm_location="Sangli", price_paise_per_kg=310)
    )
    transfer_tx = commit(
        farmer,
        Transfer(
            lot_id=lot_tx.tx_id,
            actor_from=farmer.public_bytes,
            actor_to=mill.public_bytes,
            price_paise_per_kg=310,
        ),
    )
    commit(mill, DeliveryConfirmed(lot_id=lot_tx.tx_id, transfer_tx_id=transfer_tx.tx_id))
    assert state.pending_settlements()  # the crash point: delivery persisted, payment not

    node = SugarNode(config, clock=lambda: 2_000.0)
    assert node.chain.height == chain.height + 1
    payment = node.chain.tip.transactions[0].payload
    assert isinstance(payment, PaymentSettled)
    assert payment.amount_paise == 800 * 310
    assert node.state.pending_settlements() == []


def test_torn_tail_recovered_with_warning(box):
    box.register("torn", Role.FARMER)
    height = box.node.chain.height
    with box.node.store.path.open("ab") as handle:
        handle.write(b"QUJD")  # unterminated tail, as if the process died mid-append
    reloaded = box.reopen()
    assert "torn write" in reloaded.load_warning
    assert reloaded.chain.height == height


def test_tampered_block_refused_at_startup(box):
    box.register("a", Role.FARMER)
    box.register("b", Role.SUGAR_MILL)
    box.register("c", Role.DISTRIBUTOR)
    lines = box.node.store.path.read_bytes().split(b"\n")
    record = bytearray(base64.b64decode(lines[2]))
    record[-1] ^= 0x01  # still decodes; the proposer signature no longer verifies
    lines[2] = base64.b64encode(bytes(record))
    box.node.store.path.write_bytes(b"\n".join(lines))
    with pytest.raises(CorruptStore, match="fails verification"):
        box.reopen()
