"""HTTP surface of the node: /v1, JSON envelopes, session auth.

Transactions are signed client-side; the server only verifies and commits.
Every response is wrapped in the same envelope: a request id, an ok flag,
and exactly one of result or error, with error codes equal to the internal
error class names so clients can switch on them.
"""

from __future__ import annotations

import base64
import uuid
from typing import Any

from fastapi import Depends, FastAPI, Header, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import survey as survey_module
from .errors import BadTransaction, NotFound, SessionUnknown, SugarChainError, Unauthorized
from .identity import Session
from .ledger import Block, SignedTransaction, decode_transaction, get_transaction, verify_chain
from .node import SugarNode
from .payloads import (
    CredentialRotated,
    DeliveryConfirmed,
    LotRegistered,
    PaymentSettled,
    QualityReport,
    QualityUpdate,
    Role,
    Transfer,
    UserRegistered,
    next_custody_role,
)
from .supplychain import LotState, SettlementMode, payment_latency, trace_lot

_STATUS_BY_CODE = {
    "NotFound": 404,
    "UnknownLot": 404,
    "UnknownUser": 404,
    "Unauthorized": 401,
    "SessionUnknown": 401,
    "SessionExpired": 401,
    "BadPassword": 401,
    "RecoveryFailed": 401,
    "AlreadyRegistered": 409,
    "CorruptStore": 500,
}


def _envelope(result: Any = None, error: tuple[str, str] | None = None) -> dict[str, Any]:
    body: dict[str, Any] = {"request_id": uuid.uuid4().hex, "ok": error is None}
    if error is None:
        body["result"] = result
    else:
        body["error"] = {"code": error[0], "message": error[1]}
    return body


def _ok(result: Any) -> JSONResponse:
    return JSONResponse(_envelope(result))


# -- serializers -----------------------------------------------------------

def _role_json(role: Role) -> str:
    return role.name.lower()


def _quality_json(q: QualityReport) -> dict[str, Any]:
    return {
        "grade": q.grade,
        "moisture_tenths_pct": q.moisture_tenths_pct,
        "affected_by_worms": q.affected_by_worms,
    }


def payload_json(payload: Any) -> dict[str, Any]:
    if isinstance(payload, UserRegistered):
        return {"type": "user_registered", "role": _role_json(payload.role)}
    if isinstance(payload, CredentialRotated):
        return {"type": "credential_rotated", "user_id": payload.user_id.hex()}
    if isinstance(payload, LotRegistered):
        return {
            "type": "lot_registered",
            "quantity_kg": payload.quantity_kg,
            "farm_location": payload.farm_location,
            "price_paise_per_kg": payload.price_paise_per_kg,
            "seed_supplier_ref": payload.seed_supplier_ref,
            "quality": _quality_json(payload.quality) if payload.quality else None,
        }
    if isinstance(payload, QualityUpdate):
        return {
            "type": "quality_update",
            "lot_id": payload.lot_id.hex(),
            "quality": _quality_json(payload.quality),
            "mill_info": payload.mill_info,
        }
    if isinstance(payload, Transfer):
        return {
            "type": "transfer",
            "lot_id": payload.lot_id.hex(),
            "actor_from": payload.actor_from.hex(),
            "actor_to": payload.actor_to.hex(),
            "price_paise_per_kg": payload.price_paise_per_kg,
        }
    if isinstance(payload, DeliveryConfirmed):
        return {
            "type": "delivery_confirmed",
            "lot_id": payload.lot_id.hex(),
            "transfer_tx_id": payload.transfer_tx_id.hex(),
        }
    if isinstance(payload, PaymentSettled):
        return {
            "type": "payment_settled",
            "lot_id": payload.lot_id.hex(),
            "delivery_tx_id": payload.delivery_tx_id.hex(),
            "payer": payload.payer.hex(),
            "payee": payload.payee.hex(),
            "amount_paise": payload.amount_paise,
        }
    raise NotFound(f"unserializable payload {type(payload).__name__}")


def tx_json(tx: SignedTransaction, height: int | None = None) -> dict[str, Any]:
    return {
        "tx_id": tx.tx_id_hex,
        "submitter": tx.submitter.hex(),
        "timestamp": tx.timestamp,
        "payload": payload_json(tx.payload),
        "height": height,
    }


def block_json(block: Block) -> dict[str, Any]:
    return {
        "height": block.height,
        "block_hash": block.block_hash.hex(),
        "prev_hash": block.prev_hash.hex(),
        "proposer": block.proposer.hex(),
        "timestamp": block.timestamp,
        "tx_ids": [tx.tx_id_hex for tx in block.transactions],
    }


def lot_actions(lot: LotState, mode: SettlementMode) -> list[dict[str, Any]]:
    """The submissions the node would accept for this lot right now.

    Soundness matters more than completeness here: wallets render these as
    buttons, so anything listed must go through.  A consumed lot can still
    owe its last manual payment, which is why consumption does not end the
    listing outright.
    """
    actions: list[dict[str, Any]] = []
    if not lot.consumed:
        actions.append({"action": "quality_update", "actor": lot.custodian.hex()})
    pending = lot.pending_transfer
    if pending is not None:
        actions.append(
            {
                "action": "deliver",
                "actor": pending.actor_to.hex(),
                "transfer_tx_id": pending.transfer_tx_id.hex(),
            }
        )
        return actions
    outstanding = lot.outstanding_payment
    if outstanding is not None:
        payer, payee, amount = outstanding
        leg = next(l for l in lot.legs if l.delivered and not l.settled)
        if mode is SettlementMode.MANUAL:
            actions.append(
                {
                    "action": "settle",
                    "actor": payer.hex(),
                    "payee": payee.hex(),
                    "amount_paise": amount,
                    "delivery_tx_id": leg.delivery_tx_id.hex(),
                }
            )
        if mode is SettlementMode.AUTO:
            return actions  # the validator injects the payment; nothing to offer
    if lot.consumed:
        return actions
    to_role = next_custody_role(lot.custodian_role)
    if to_role is not None and (mode is SettlementMode.MANUAL or outstanding is None):
        actions.append(
            {
                "action": "transfer",
                "actor": lot.custodian.hex(),
                "to_role": _role_json(to_role),
            }
        )
    return actions


def lot_json(lot: LotState, mode: SettlementMode) -> dict[str, Any]:
    pending = lot.pending_transfer
    outstanding = lot.outstanding_payment
    return {
        "lot_id": lot.lot_id.hex(),
        "quantity_kg": lot.quantity_kg,
        "farm_location": lot.farm_location,
        "custodian": lot.custodian.hex(),
        "custodian_role": _role_json(lot.custodian_role),
        "registered_height": lot.registered_height,
        "seed_supplier_ref": lot.seed_supplier_ref,
        "consumed": lot.consumed,
        "pending_transfer": None
        if pending is None
        else {
            "transfer_tx_id": pending.transfer_tx_id.hex(),
            "actor_from": pending.actor_from.hex(),
            "actor_to": pending.actor_to.hex(),
            "price_paise_per_kg": pending.price_paise_per_kg,
        },
        "outstanding_payment": None
        if outstanding is None
        else {
            "payer": outstanding[0].hex(),
            "payee": outstanding[1].hex(),
            "amount_paise": outstanding[2],
        },
        "next_actions": lot_actions(lot, mode),
    }


def _session_json(session: Session) -> dict[str, Any]:
    return {
        "token": session.token,
        "user_id": session.user_id.hex(),
        "issued_at": session.issued_at,
        "expires_at": session.expires_at,
    }


# -- request bodies --------------------------------------------------------

class RecoveryPair(BaseModel):
    question: str
    answer: str


class RegisterBody(BaseModel):
    name: str
    email: str
    phone: str
    password: str
    role: str
    recovery: list[RecoveryPair] = Field(min_length=3, max_length=3)


class LoginBody(BaseModel):
    user_id: str
    password: str


class RecoverBody(BaseModel):
    user_id: str
    answers: list[str] = Field(min_length=3, max_length=3)
    new_password: str


class TxBody(BaseModel):
    tx: str  # base64 of the canonical signed transaction


# -- application -----------------------------------------------------------

def create_app(node: SugarNode) -> FastAPI:
    app = FastAPI(title="sugarchain node", docs_url=None, redoc_url=None)

    @app.exception_handler(SugarChainError)
    async def _domain_error(_request: Request, exc: SugarChainError) -> JSONResponse:
        status = _STATUS_BY_CODE.get(exc.code, 400)
        return JSONResponse(_envelope(error=(exc.code, str(exc))), status_code=status)

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(_envelope(error=("BadValue", str(exc))), status_code=400)

    def require_session(authorization: str = Header(default="")) -> Session:
        scheme, _, token = authorization.partition(" ")
        if scheme.lower() != "bearer" or not token:
            raise SessionUnknown("expected Authorization: Bearer <token>")
        return node.sessions.validate(token.strip())

    @app.post("/v1/register")
    def register(body: RegisterBody) -> JSONResponse:
        key, tx = node.register_user(
            body.name,
            body.email,
            body.phone,
            body.password,
            Role.from_name(body.role),
            [(p.question, p.answer) for p in body.recovery],
        )
        return _ok(
            {
                "user_id": key.user_id,
                "private_key_seed": key.seed_bytes().hex(),
                "tx_id": tx.tx_id_hex,
            }
        )

    @app.post("/v1/login")
    def login(body: LoginBody) -> JSONResponse:
        return _ok(_session_json(node.login(body.user_id, body.password)))

    @app.post("/v1/recover")
    def recover(body: RecoverBody) -> JSONResponse:
        return _ok(_session_json(node.recover(body.user_id, body.answers, body.new_password)))

    @app.post("/v1/tx")
    def submit_tx(body: TxBody, session: Session = Depends(require_session)) -> JSONResponse:
        try:
            tx = decode_transaction(base64.b64decode(body.tx, validate=True))
        except (ValueError, SugarChainError) as exc:
            raise BadTransaction(f"undecodable transaction: {exc}") from None
        if tx.submitter != session.user_id:
            raise Unauthorized("session user is not the transaction submitter")
        block, settlements = node.submit(tx)
        return _ok(
            {
                "tx_id": tx.tx_id_hex,
                "height": block.height,
                "settlement_blocks": [block_json(b) for b in settlements],
            }
        )

    @app.get("/v1/tx/{tx_id}")
    def get_tx(tx_id: str) -> JSONResponse:
        tx, height = get_transaction(node.chain, _hex32(tx_id))
        return _ok(tx_json(tx, height))

    @app.get("/v1/lot/{lot_id}/trace")
    def lot_trace(lot_id: str) -> JSONResponse:
        prov = trace_lot(node.chain, _hex32(lot_id))
        return _ok(
            {
                "lot_id": prov.lot_id.hex(),
                "quantity_kg": prov.quantity_kg,
                "farm_location": prov.farm_location,
                "registered_by": prov.registered_by.hex(),
                "registered_height": prov.registered_height,
                "seed_supplier_ref": prov.seed_supplier_ref,
                "legs": [
                    {
                        "role_from": _role_json(leg.role_from),
                        "role_to": _role_json(leg.role_to),
                        "tx_id": leg.tx_id.hex(),
                        "timestamp": leg.timestamp,
                        "price_paise_per_kg": leg.price_paise_per_kg,
                        "delivered": leg.delivered,
                        "settled": leg.settled,
                    }
                    for leg in prov.legs
                ],
                "quality_timeline": [
                    {"tx_id": tx_id.hex(), "height": height, **_quality_json(quality)}
                    for tx_id, height, quality in prov.quality_timeline
                ],
            }
        )

    @app.get("/v1/lot/{lot_id}/latency")
    def lot_latency(lot_id: str) -> JSONResponse:
        legs = payment_latency(node.chain, _hex32(lot_id))
        return _ok(
            [
                {
                    "leg_index": leg.leg_index,
                    "role_from": _role_json(leg.role_from),
                    "role_to": _role_json(leg.role_to),
                    "delivery_height": leg.delivery_height,
                    "settle_height": leg.settle_height,
                    "blocks_to_settle": leg.blocks_to_settle,
                }
                for leg in legs
            ]
        )

    @app.get("/v1/lots")
    def lots() -> JSONResponse:
        mode = node.config.settlement.mode
        items = [
            lot_json(node.state.lots[lot_id], mode) for lot_id in sorted(node.state.lots)
        ]
        return _ok(items)

    @app.get("/v1/users")
    def users() -> JSONResponse:
        return _ok(
            [
                {
                    "user_id": uid.hex(),
                    "role": _role_json(record.role),
                    "created_at": record.created_at,
                }
                for uid, record in sorted(node.state.users.items())
            ]
        )

    @app.get("/v1/chain/verify")
    def chain_verify() -> JSONResponse:
        report = verify_chain(node.chain)
        return _ok(
            {
                "ok": report.ok,
                "height": node.chain.height,
                "bad_height": report.bad_height,
                "reason": report.reason,
            }
        )

    @app.get("/v1/chain/blocks")
    def chain_blocks(
        from_height: int = Query(default=0, alias="from", ge=0),
        to_height: int | None = Query(default=None, alias="to", ge=0),
    ) -> JSONResponse:
        top = node.chain.height if to_height is None else min(to_height, node.chain.height)
        if top - from_height > 1000:
            top = from_height + 1000
        blocks = [
            block_json(node.chain.blocks[h]) for h in range(from_height, top + 1)
        ]
        return _ok(blocks)

    @app.get("/v1/survey/report")
    def survey_report() -> JSONResponse:
        path = node.config.survey_csv or survey_module.bundled_fixture_path()
        records = survey_module.load_survey(path)
        entries = survey_module.tabulate_all(records)
        delay = survey_module.payment_delay_summary(records)
        rows: list[dict[str, Any]] = []
        for entry in entries:
            if isinstance(entry, survey_module.Distribution):
                rows.append(
                    {
                        "question": entry.question,
                        "title": survey_module.QUESTION_TITLES[entry.question],
                        "n": entry.n,
                        "options": [
                            {
                                "option": option,
                                "count": count,
                                "percent": survey_module.format_percent(
                                    entry.fraction(option)
                                ),
                            }
                            for option, count in zip(entry.options, entry.counts)
                        ],
                    }
                )
            else:
                rows.append(
                    {
                        "question": entry.question,
                        "title": survey_module.QUESTION_TITLES[entry.question],
                        "n": entry.n,
                        "min": entry.minimum,
                        "max": entry.maximum,
                        "mean": survey_module.format_decimal(entry.mean),
                    }
                )
        return _ok(
            {
                "report": survey_module.export_report(entries, delay=delay),
                "questions": rows,
                "delay": {
                    "fraction_delayed": survey_module.format_percent(delay.fraction_delayed),
                    "min_days": delay.min_days,
                    "max_days": delay.max_days,
                },
            }
        )

    if node.config.static_dir is not None and node.config.static_dir.is_dir():
        app.mount("/", StaticFiles(directory=node.config.static_dir, html=True), name="ui")

    return app


def _hex32(text: str) -> bytes:
    try:
        raw = bytes.fromhex(text)
    except ValueError:
        raise NotFound(f"{text!r} is not a hex id") from None
    if len(raw) != 32:
        raise NotFound("ids are 32 bytes of hex")
    return raw


def serve(node: SugarNode) -> None:
    """Blocking server; raises PortInUse before uvicorn takes over the port."""
    import socket

    import uvicorn

    from .errors import PortInUse

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((node.config.host, node.config.port))
    except OSError as exc:
        raise PortInUse(f"{node.config.listen_address}: {exc}") from None
    finally:
        probe.close()

    app = create_app(node)
    uvicorn.run(app, host=node.config.host, port=node.config.port, log_level="warning")
