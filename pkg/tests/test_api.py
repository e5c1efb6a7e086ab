"""HTTP API: envelope discipline, auth gating, status codes, offered actions.

Every test runs against a real node on tmp storage through the fastapi test
client, signing transactions client-side exactly as a browser wallet would.
"""

from __future__ import annotations

import base64

import pytest
from fastapi.testclient import TestClient

from sugarchain.api import create_app, serve
from sugarchain.crypto import SigningKey
from sugarchain.errors import PortInUse
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
from sugarchain.supplychain import SettlementMode

from conftest import RECOVERY, NodeBox

ROLE_ORDER = [Role.FARMER, Role.SUGAR_MILL, Role.DISTRIBUTOR, Role.RETAILER, Role.CONSUMER]


def unwrap(response, status: int = 200):
    """Assert the envelope invariants, then hand back result or error."""
    assert response.status_code == status, response.text
    body = response.json()
    assert body["request_id"]
    if status < 400:
        assert body["ok"] is True
        assert set(body) == {"request_id", "ok", "result"}
        return body["result"]
    assert body["ok"] is False
    assert set(body) == {"request_id", "ok", "error"}
    assert set(body["error"]) == {"code", "message"}
    return body["error"]


class ApiHarness:
    def __init__(self, tmp_path, mode: SettlementMode = SettlementMode.AUTO):
        self.box = NodeBox(tmp_path, mode=mode)
        self.node = self.box.node
        self.client = TestClient(create_app(self.node))
        self.keys: dict[str, SigningKey] = {}
        self.tokens: dict[str, str] = {}

    def register(self, name: str, role: Role) -> SigningKey:
        self.box.tick()
        result = unwrap(
            self.client.post(
                "/v1/register",
                json={
                    "name": name,
                    "email": f"{name}@x.example",
                    "phone": "9800000001",
                    "password": f"pw-{name}-test",
                    "role": role.name.lower(),
                    "recovery": [{"question": q, "answer": a} for q, a in RECOVERY],
                },
            )
        )
        key = SigningKey.from_seed(bytes.fromhex(result["private_key_seed"]))
        assert key.user_id == result["user_id"]  # the seed in the response is the real key
        self.keys[name] = key
        login = unwrap(
            self.client.post(
                "/v1/login", json={"user_id": key.user_id, "password": f"pw-{name}-test"}
            )
        )
        self.tokens[name] = login["token"]
        return key

    def submit(self, name: str, payload, status: int = 200):
        self.box.tick()
        tx = build_transaction(self.keys[name], payload, self.node.now_ms())
        return unwrap(
            self.client.post(
                "/v1/tx",
                json={"tx": base64.b64encode(tx.encode()).decode()},
                headers={"Authorization": f"Bearer {self.tokens[name]}"},
            ),
            status,
        )

    def lot(self, lot_id: bytes) -> dict:
        lots = unwrap(self.client.get("/v1/lots"))
        return next(item for item in lots if item["lot_id"] == lot_id.hex())


@pytest.fixture
def api(tmp_path) -> ApiHarness:
    return ApiHarness(tmp_path)


@pytest.fixture
def manual_api(tmp_path) -> ApiHarness:
    return ApiHarness(tmp_path, mode=SettlementMode.MANUAL)


# -- identity over HTTP ----------------------------------------------------


def test_register_login_and_whoami_flow(api):
    key = api.register("asha", Role.FARMER)
    users = unwrap(api.client.get("/v1/users"))
    assert [(u["user_id"], u["role"]) for u in users] == [(key.user_id, "farmer")]


def test_reregistering_same_key_conflicts(api):
    """A second registration signed by an already registered key gets 409.

    Fresh calls to /v1/register always mint a new keypair, and the details
    ride encrypted, so the node cannot (and must not) dedupe on email; the
    conflict is on the signing identity itself.
    """
    from sugarchain.identity import build_registration

    api.register("asha", Role.FARMER)
    _, payload = build_registration(
        "asha again",
        "asha@x.example",
        "9800000001",
        "pw-asha-test",
        Role.FARMER,
        RECOVERY,
        kdf=api.node.config.kdf,
    )
    error = api.submit("asha", payload, status=409)
    assert error["code"] == "AlreadyRegistered"


def test_login_failures_map_to_status(api):
    key = api.register("asha", Role.FARMER)
    error = unwrap(
        api.client.post("/v1/login", json={"user_id": key.user_id, "password": "nope"}), 401
    )
    assert error["code"] == "BadPassword"
    error = unwrap(
        api.client.post("/v1/login", json={"user_id": "ab" * 32, "password": "nope"}), 404
    )
    assert error["code"] == "UnknownUser"


def test_recover_rotates_password_over_http(api):
    key = api.register("meera", Role.FARMER)
    error = unwrap(
        api.client.post(
            "/v1/recover",
            json={
                "user_id": key.user_id,
                "answers": ["rex", "mumbai", "cane"],
                "new_password": "pw-rotated-ok",
            },
        ),
        401,
    )
    assert error["code"] == "RecoveryFailed"
    session = unwrap(
        api.client.post(
            "/v1/recover",
            json={
                "user_id": key.user_id,
                "answers": ["rex", "pune", "cane"],
                "new_password": "pw-rotated-ok",
            },
        )
    )
    assert session["user_id"] == key.user_id
    unwrap(
        api.client.post("/v1/login", json={"user_id": key.user_id, "password": "pw-meera-test"}),
        401,
    )
    unwrap(api.client.post("/v1/login", json={"user_id": key.user_id, "password": "pw-rotated-ok"}))


def test_short_recovery_list_is_bad_value(api):
    error = unwrap(
        api.client.post(
            "/v1/recover",
            json={"user_id": "ab" * 32, "answers": ["a", "b"], "new_password": "pw-rotated-ok"},
        ),
        400,
    )
    assert error["code"] == "BadValue"


# -- auth gating -----------------------------------------------------------


@pytest.mark.parametrize(
    "headers",
    [
        {},
        {"Authorization": "Bearer"},
        {"Authorization": "Basic abc"},
        {"Authorization": "Bearer bogus-token"},
    ],
)
def test_tx_submission_requires_live_session(api, headers):
    error = unwrap(api.client.post("/v1/tx", json={"tx": "AA=="}, headers=headers), 401)
    assert error["code"] == "SessionUnknown"


def test_session_must_match_submitter(api):
    farmer = api.register("farmer", Role.FARMER)
    api.register("mill", Role.SUGAR_MILL)
    tx = build_transaction(
        farmer,
        LotRegistered(quantity_kg=100, farm_location="Pune", price_paise_per_kg=200),
        api.node.now_ms(),
    )
    error = unwrap(
        api.client.post(
            "/v1/tx",
            json={"tx": base64.b64encode(tx.encode()).decode()},
            headers={"Authorization": f"Bearer {api.tokens['mill']}"},
        ),
        401,
    )
    assert error["code"] == "Unauthorized"


def test_reads_need_no_session(api):
    api.register("farmer", Role.FARMER)
    for path in ["/v1/users", "/v1/lots", "/v1/chain/verify", "/v1/chain/blocks"]:
        unwrap(api.client.get(path))


def test_undecodable_tx_rejected(api):
    api.register("farmer", Role.FARMER)
    headers = {"Authorization": f"Bearer {api.tokens['farmer']}"}
    error = unwrap(api.client.post("/v1/tx", json={"tx": "!!!"}, headers=headers), 400)
    assert error["code"] == "BadTransaction"
    garbage = base64.b64encode(b"\x00" * 40).decode()
    error = unwrap(api.client.post("/v1/tx", json={"tx": garbage}, headers=headers), 400)
    assert error["code"] == "BadTransaction"


# -- custody over HTTP -----------------------------------------------------


def test_full_custody_flow_with_auto_settlement(api):
    farmer = api.register("farmer", Role.FARMER)
    mill = api.register("mill", Role.SUGAR_MILL)
    result = api.submit(
        "farmer",
        LotRegistered(quantity_kg=1500, farm_location="Kolhapur", price_paise_per_kg=320),
    )
    lot_id = bytes.fromhex(result["tx_id"])
    assert result["settlement_blocks"] == []

    api.submit(
        "farmer",
        Transfer(
            lot_id=lot_id,
            actor_from=farmer.public_bytes,
            actor_to=mill.public_bytes,
            price_paise_per_kg=320,
        ),
    )
    transfer_tx_id = bytes.fromhex(api.lot(lot_id)["pending_transfer"]["transfer_tx_id"])
    result = api.submit("mill", DeliveryConfirmed(lot_id=lot_id, transfer_tx_id=transfer_tx_id))
    assert len(result["settlement_blocks"]) == 1
    assert result["settlement_blocks"][0]["height"] == result["height"] + 1

    latency = unwrap(api.client.get(f"/v1/lot/{lot_id.hex()}/latency"))
    assert [leg["blocks_to_settle"] for leg in latency] == [1]

    trace = unwrap(api.client.get(f"/v1/lot/{lot_id.hex()}/trace"))
    assert trace["farm_location"] == "Kolhapur"
    assert [(leg["role_from"], leg["role_to"]) for leg in trace["legs"]] == [
        ("farmer", "sugar_mill")
    ]
    assert trace["legs"][0]["delivered"] and trace["legs"][0]["settled"]

    settle_txs = result["settlement_blocks"][0]["tx_ids"]
    settlement = unwrap(api.client.get(f"/v1/tx/{settle_txs[0]}"))
    assert settlement["payload"]["type"] == "payment_settled"
    assert settlement["payload"]["amount_paise"] == 1500 * 320


def test_tx_lookup_and_bad_ids(api):
    api.register("farmer", Role.FARMER)
    result = api.submit(
        "farmer", LotRegistered(quantity_kg=10, farm_location="Pune", price_paise_per_kg=90)
    )
    found = unwrap(api.client.get(f"/v1/tx/{result['tx_id']}"))
    assert found["height"] == result["height"]
    assert found["payload"]["type"] == "lot_registered"
    assert unwrap(api.client.get(f"/v1/tx/{'00' * 32}"), 404)["code"] == "NotFound"
    assert unwrap(api.client.get("/v1/tx/nothex"), 404)["code"] == "NotFound"
    assert unwrap(api.client.get(f"/v1/lot/{'00' * 32}/trace"), 404)["code"] == "UnknownLot"


def test_chain_verify_and_block_range(api):
    api.register("a", Role.FARMER)
    api.register("b", Role.SUGAR_MILL)
    verify = unwrap(api.client.get("/v1/chain/verify"))
    assert verify == {"ok": True, "height": 2, "bad_height": None, "reason": None}
    blocks = unwrap(api.client.get("/v1/chain/blocks", params={"from": 1, "to": 2}))
    assert [b["height"] for b in blocks] == [1, 2]
    assert blocks[1]["prev_hash"] == blocks[0]["block_hash"]
    everything = unwrap(api.client.get("/v1/chain/blocks"))
    assert [b["height"] for b in everything] == [0, 1, 2]


# -- offered actions -------------------------------------------------------


def build_offer_tx(api: ApiHarness, lot_id: bytes, action: dict):
    """Turn an advertised next_action into the signed transaction it describes."""
    by_user = {key.public_bytes: key for key in api.keys.values()}
    by_role = {
        api.node.state.users[key.public_bytes].role: key for key in api.keys.values()
    }
    actor = bytes.fromhex(action["actor"])
    kind = action["action"]
    if kind == "quality_update":
        payload = QualityUpdate(lot_id=lot_id, quality=QualityReport("B", 130, False))
    elif kind == "deliver":
        payload = DeliveryConfirmed(
            lot_id=lot_id, transfer_tx_id=bytes.fromhex(action["transfer_tx_id"])
        )
    elif kind == "settle":
        payload = PaymentSettled(
            lot_id=lot_id,
            delivery_tx_id=bytes.fromhex(action["delivery_tx_id"]),
            payer=actor,
            payee=bytes.fromhex(action["payee"]),
            amount_paise=action["amount_paise"],
        )
    elif kind == "transfer":
        target = by_role[Role.from_name(action["to_role"])]
        payload = Transfer(
            lot_id=lot_id,
            actor_from=actor,
            actor_to=target.public_bytes,
            price_paise_per_kg=260,
        )
    else:
        raise AssertionError(f"unknown offered action {kind}")
    return build_transaction(by_user[actor], payload, api.node.now_ms())


def assert_offers_sound(api: ApiHarness, lot_id: bytes):
    """Every action the API offers must be one the node would accept."""
    for action in api.lot(lot_id)["next_actions"]:
        tx = build_offer_tx(api, lot_id, action)
        violation = api.node.state.validate_tx(tx)
        assert violation is None, f"offered {action['action']} but node says {violation}"


def walk_chain_to_consumer(api: ApiHarness, manual: bool):
    names = ["farmer", "mill", "dist", "retail", "consumer"]
    for name, role in zip(names, ROLE_ORDER):
        api.register(name, role)
    result = api.submit(
        "farmer", LotRegistered(quantity_kg=900, farm_location="Sangli", price_paise_per_kg=260)
    )
    lot_id = bytes.fromhex(result["tx_id"])
    for sender, receiver in zip(names, names[1:]):
        assert_offers_sound(api, lot_id)
        offered = {a["action"] for a in api.lot(lot_id)["next_actions"]}
        assert offered == {"quality_update", "transfer"}
        api.submit(
            sender,
            Transfer(
                lot_id=lot_id,
                actor_from=api.keys[sender].public_bytes,
                actor_to=api.keys[receiver].public_bytes,
                price_paise_per_kg=260,
            ),
        )
        assert_offers_sound(api, lot_id)
        offered = {a["action"] for a in api.lot(lot_id)["next_actions"]}
        assert offered == {"quality_update", "deliver"}
        transfer_tx_id = bytes.fromhex(api.lot(lot_id)["pending_transfer"]["transfer_tx_id"])
        api.submit(receiver, DeliveryConfirmed(lot_id=lot_id, transfer_tx_id=transfer_tx_id))
        if manual:
            assert_offers_sound(api, lot_id)
            offered = {a["action"] for a in api.lot(lot_id)["next_actions"]}
            if receiver == "consumer":
                expected = {"settle"}  # consumed, but the last payment is still owed
            else:
                expected = {"quality_update", "settle", "transfer"}
            assert offered == expected
            action = next(
                a for a in api.lot(lot_id)["next_actions"] if a["action"] == "settle"
            )
            api.submit(
                receiver,
                PaymentSettled(
                    lot_id=lot_id,
                    delivery_tx_id=bytes.fromhex(action["delivery_tx_id"]),
                    payer=bytes.fromhex(action["actor"]),
                    payee=bytes.fromhex(action["payee"]),
                    amount_paise=action["amount_paise"],
                ),
            )
    assert api.lot(lot_id)["consumed"] is True
    assert api.lot(lot_id)["next_actions"] == []
    return lot_id


def test_offered_actions_accepted_auto(api):
    lot_id = walk_chain_to_consumer(api, manual=False)
    latency = unwrap(api.client.get(f"/v1/lot/{lot_id.hex()}/latency"))
    assert [leg["blocks_to_settle"] for leg in latency] == [1, 1, 1, 1]


def test_offered_actions_accepted_manual(manual_api):
    walk_chain_to_consumer(manual_api, manual=True)


# -- survey and static -----------------------------------------------------


def test_survey_report_endpoint(api):
    result = unwrap(api.client.get("/v1/survey/report"))
    assert result["report"].startswith("sugarchain-survey-report v1")
    assert len(result["questions"]) == 15
    q1 = result["questions"][0]
    assert q1["question"] == "q1"
    assert {"option": "gt10", "count": 27, "percent": "67.5%"} in q1["options"]
    assert result["delay"]["fraction_delayed"] == "92.5%"
    assert (result["delay"]["min_days"], result["delay"]["max_days"]) == (15, 45)


def test_static_dir_served_when_configured(tmp_path):
    static = tmp_path / "ui"
    static.mkdir()
    (static / "index.html").write_text("<!doctype html><title>wallet</title>")
    box = NodeBox(tmp_path)
    from dataclasses import replace

    box.node.config = replace(box.config, static_dir=static)
    client = TestClient(create_app(box.node))
    page = client.get("/")
    assert page.status_code == 200
    assert "wallet" in page.text
    unwrap(client.get("/v1/users"))  # the API still wins over the static mount


def test_serve_refuses_port_in_use(tmp_path):
    import socket

    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.bind(("127.0.0.1", 0))
    sock.listen(1)
    port = sock.getsockname()[1]
    try:
        box = NodeBox(tmp_path)
        box.node.config = box.config = replace_listen(box.config, f"127.0.0.1:{port}")
        with pytest.raises(PortInUse):
            serve(box.node)
    finally:
        sock.close()


def replace_listen(config, listen_address):
    from dataclasses import replace

    return replace(config, listen_address=listen_address)
