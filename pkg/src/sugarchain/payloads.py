"""Transaction payloads and their canonical wire form.

Identity events use tags 0x01-0x02, supply-chain events 0x10-0x14.  Every
payload is a frozen dataclass with a matching encoder and decoder; the tag
registry at the bottom is the single place the union is defined.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .codec import Reader, Writer
from .crypto import KdfParams
from .errors import DecodeError

TAG_USER_REGISTERED = 0x01
TAG_CREDENTIAL_ROTATED = 0x02
TAG_LOT_REGISTERED = 0x10
TAG_QUALITY_UPDATE = 0x11
TAG_TRANSFER = 0x12
TAG_DELIVERY_CONFIRMED = 0x13
TAG_PAYMENT_SETTLED = 0x14


class Role(enum.IntEnum):
    """Actor roles; the first six, in order, form the custody chain."""

    SEED_SUPPLIER = 0
    FARMER = 1
    SUGAR_MILL = 2
    DISTRIBUTOR = 3
    RETAILER = 4
    CONSUMER = 5
    VALIDATOR = 6

    @classmethod
    def from_name(cls, name: str) -> "Role":
        """Accepts SUGAR_MILL, SugarMill, sugar-mill and friends."""
        text = name.strip().replace("-", "_").replace(" ", "_")
        text = re.sub(r"(?<=[a-z0-9])(?=[A-Z])", "_", text).upper()
        try:
            return cls[text]
        except KeyError:
            raise DecodeError(f"unknown role {name!r}") from None


# Custody may only advance along this chain, one hop at a time.
CUSTODY_CHAIN: tuple[Role, ...] = (
    Role.SEED_SUPPLIER,
    Role.FARMER,
    Role.SUGAR_MILL,
    Role.DISTRIBUTOR,
    Role.RETAILER,
    Role.CONSUMER,
)


def next_custody_role(role: Role) -> Role | None:
    idx = CUSTODY_CHAIN.index(role)
    if idx + 1 >= len(CUSTODY_CHAIN):
        return None
    return CUSTODY_CHAIN[idx + 1]


# -- shared fragments ------------------------------------------------------

@dataclass(frozen=True)
class QualityReport:
    """Quality observation; moisture is stored in tenths of a percent."""

    grade: str
    moisture_tenths_pct: int
    affected_by_worms: bool


def _write_quality(w: Writer, q: QualityReport) -> None:
    w.text(q.grade).u32(q.moisture_tenths_pct).boolean(q.affected_by_worms)


def _read_quality(r: Reader) -> QualityReport:
    return QualityReport(grade=r.text(), moisture_tenths_pct=r.u32(), affected_by_worms=r.boolean())


def _write_kdf(w: Writer, k: KdfParams) -> None:
    w.u32(k.n).u32(k.r).u32(k.p).u32(k.dklen)


def _read_kdf(r: Reader) -> KdfParams:
    return KdfParams(n=r.u32(), r=r.u32(), p=r.u32(), dklen=r.u32())


@dataclass(frozen=True)
class RecoveryEntry:
    question: str
    salt: bytes
    verifier: bytes


def _write_recovery(w: Writer, e: RecoveryEntry) -> None:
    w.text(e.question).bytes_(e.salt).bytes_(e.verifier)


def _read_recovery(r: Reader) -> RecoveryEntry:
    return RecoveryEntry(question=r.text(), salt=r.bytes_(), verifier=r.bytes_())


# -- identity payloads -----------------------------------------------------

@dataclass(frozen=True)
class UserRegistered:
    """Registration record: everything personal is inside encrypted_details.

    The detail key is derived from the password; a copy wrapped under the
    recovery-answer key lets password recovery re-encrypt the details.
    """

    role: Role
    detail_salt: bytes
    detail_nonce: bytes
    encrypted_details: bytes
    auth_salt: bytes
    auth_verifier: bytes
    kdf: KdfParams
    recovery: tuple[RecoveryEntry, ...]
    wrap_salt: bytes
    wrap_nonce: bytes
    wrapped_detail_key: bytes

    tag = TAG_USER_REGISTERED

    def write_body(self, w: Writer) -> None:
        w.u8(int(self.role))
        w.bytes_(self.detail_salt).bytes_(self.detail_nonce).bytes_(self.encrypted_details)
        w.bytes_(self.auth_salt).bytes_(self.auth_verifier)
        _write_kdf(w, self.kdf)
        w.sequence(self.recovery, _write_recovery)
        w.bytes_(self.wrap_salt).bytes_(self.wrap_nonce).bytes_(self.wrapped_detail_key)


def _read_user_registered(r: Reader) -> UserRegistered:
    return UserRegistered(
        role=Role(r.u8()),
        detail_salt=r.bytes_(),
        detail_nonce=r.bytes_(),
        encrypted_details=r.bytes_(),
        auth_salt=r.bytes_(),
        auth_verifier=r.bytes_(),
        kdf=_read_kdf(r),
        recovery=tuple(r.sequence(_read_recovery)),
        wrap_salt=r.bytes_(),
        wrap_nonce=r.bytes_(),
        wrapped_detail_key=r.bytes_(),
    )


@dataclass(frozen=True)
class CredentialRotated:
    """Password rotation for user_id: fresh auth verifier, re-encrypted details.

    Submitted by the user themself or, in the recovery flow, by a validator
    acting on a verified answer set (the user's signing key stays client-side).
    """

    user_id: bytes
    detail_salt: bytes
    detail_nonce: bytes
    encrypted_details: bytes
    auth_salt: bytes
    auth_verifier: bytes
    kdf: KdfParams
    wrap_salt: bytes
    wrap_nonce: bytes
    wrapped_detail_key: bytes

    tag = TAG_CREDENTIAL_ROTATED

    def write_body(self, w: Writer) -> None:
        w.bytes_(self.user_id)
        w.bytes_(self.detail_salt).bytes_(self.detail_nonce).bytes_(self.encrypted_details)
        w.bytes_(self.auth_salt).bytes_(self.auth_verifier)
        _write_kdf(w, self.kdf)
        w.bytes_(self.wrap_salt).bytes_(self.wrap_nonce).bytes_(self.wrapped_detail_key)


def _read_credential_rotated(r: Reader) -> CredentialRotated:
    return CredentialRotated(
        user_id=r.bytes_(),
        detail_salt=r.bytes_(),
        detail_nonce=r.bytes_(),
        encrypted_details=r.bytes_(),
        auth_salt=r.bytes_(),
        auth_verifier=r.bytes_(),
        kdf=_read_kdf(r),
        wrap_salt=r.bytes_(),
        wrap_nonce=r.bytes_(),
        wrapped_detail_key=r.bytes_(),
    )


# -- supply-chain payloads -------------------------------------------------

@dataclass(frozen=True)
class LotRegistered:
    """A farmer opens a lot; its id becomes the registering transaction id."""

    quantity_kg: int
    farm_location: str
    price_paise_per_kg: int
    seed_supplier_ref: str | None = None
    quality: QualityReport | None = None

    tag = TAG_LOT_REGISTERED

    def write_body(self, w: Writer) -> None:
        w.u64(self.quantity_kg).text(self.farm_location).u64(self.price_paise_per_kg)
        w.optional(self.seed_supplier_ref, Writer.text)
        w.optional(self.quality, _write_quality)


def _read_lot_registered(r: Reader) -> LotRegistered:
    return LotRegistered(
        quantity_kg=r.u64(),
        farm_location=r.text(),
        price_paise_per_kg=r.u64(),
        seed_supplier_ref=r.optional(Reader.text),
        quality=r.optional(_read_quality),
    )


@dataclass(frozen=True)
class QualityUpdate:
    lot_id: bytes
    quality: QualityReport
    mill_info: str | None = None

    tag = TAG_QUALITY_UPDATE

    def write_body(self, w: Writer) -> None:
        w.bytes_(self.lot_id)
        _write_quality(w, self.quality)
        w.optional(self.mill_info, Writer.text)


def _read_quality_update(r: Reader) -> QualityUpdate:
    return QualityUpdate(lot_id=r.bytes_(), quality=_read_quality(r), mill_info=r.optional(Reader.text))


@dataclass(frozen=True)
class Transfer:
    """Custody handover offer from the current custodian to the next role."""

    lot_id: bytes
    actor_from: bytes
    actor_to: bytes
    price_paise_per_kg: int

    tag = TAG_TRANSFER

    def write_body(self, w: Writer) -> None:
        w.bytes_(self.lot_id).bytes_(self.actor_from).bytes_(self.actor_to)
        w.u64(self.price_paise_per_kg)


def _read_transfer(r: Reader) -> Transfer:
    return Transfer(lot_id=r.bytes_(), actor_from=r.bytes_(), actor_to=r.bytes_(), price_paise_per_kg=r.u64())


@dataclass(frozen=True)
class DeliveryConfirmed:
    lot_id: bytes
    transfer_tx_id: bytes

    tag = TAG_DELIVERY_CONFIRMED

    def write_body(self, w: Writer) -> None:
        w.bytes_(self.lot_id).bytes_(self.transfer_tx_id)


def _read_delivery_confirmed(r: Reader) -> DeliveryConfirmed:
    return DeliveryConfirmed(lot_id=r.bytes_(), transfer_tx_id=r.bytes_())


@dataclass(frozen=True)
class PaymentSettled:
    """Settlement closing a delivered leg; amount is exact integer paise."""

    lot_id: bytes
    delivery_tx_id: bytes
    payer: bytes
    payee: bytes
    amount_paise: int

    tag = TAG_PAYMENT_SETTLED

    def write_body(self, w: Writer) -> None:
        w.bytes_(self.lot_id).bytes_(self.delivery_tx_id)
        w.bytes_(self.payer).bytes_(self.payee).u64(self.amount_paise)


def _read_payment_settled(r: Reader) -> PaymentSettled:
    return PaymentSettled(
        lot_id=r.bytes_(),
        delivery_tx_id=r.bytes_(),
        payer=r.bytes_(),
        payee=r.bytes_(),
        amount_paise=r.u64(),
    )


Payload = (
    UserRegistered
    | CredentialRotated
    | LotRegistered
    | QualityUpdate
    | Transfer
    | DeliveryConfirmed
    | PaymentSettled
)

LotEvent = LotRegistered | QualityUpdate | Transfer | DeliveryConfirmed | PaymentSettled

_DECODERS = {
    TAG_USER_REGISTERED: _read_user_registered,
    TAG_CREDENTIAL_ROTATED: _read_credential_rotated,
    TAG_LOT_REGISTERED: _read_lot_registered,
    TAG_QUALITY_UPDATE: _read_quality_update,
    TAG_TRANSFER: _read_transfer,
    TAG_DELIVERY_CONFIRMED: _read_delivery_confirmed,
    TAG_PAYMENT_SETTLED: _read_payment_settled,
}


def write_payload(w: Writer, payload: Payload) -> None:
    w.u8(payload.tag)
    payload.write_body(w)


def read_payload(r: Reader) -> Payload:
    tag = r.u8()
    decoder = _DECODERS.get(tag)
    if decoder is None:
        raise DecodeError(f"unknown payload tag 0x{tag:02x}")
    return decoder(r)


def encode_payload(payload: Payload) -> bytes:
    w = Writer()
    write_payload(w, payload)
    return w.getvalue()
