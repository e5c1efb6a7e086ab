"""Per-lot custody state machine, settlement, and provenance tracing.

A lot starts when a farmer registers it and then walks the custody chain one
role at a time: a Transfer opens a leg, DeliveryConfirmed moves custody and
creates the payment obligation, PaymentSettled closes it.  Provenance is
always reconstructed from committed blocks, never from cached state.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from .errors import UnknownLot
from .ledger import Chain, SignedTransaction
from .payloads import (
    DeliveryConfirmed,
    LotEvent,
    LotRegistered,
    PaymentSettled,
    QualityReport,
    QualityUpdate,
    Role,
    Transfer,
    next_custody_role,
)


class SettlementMode(enum.Enum):
    AUTO = "auto"
    MANUAL = "manual"


@dataclass(frozen=True)
class SettlementRule:
    """auto: settlements must commit within max_block_lag blocks of delivery."""

    mode: SettlementMode = SettlementMode.AUTO
    max_block_lag: int = 1

    def __post_init__(self) -> None:
        if self.max_block_lag < 1:
            raise ValueError("max_block_lag must be >= 1")


@dataclass
class Leg:
    """One custody hop: opened by a transfer, closed by delivery + settlement."""

    transfer_tx_id: bytes
    actor_from: bytes
    actor_to: bytes
    role_from: Role
    role_to: Role
    price_paise_per_kg: int
    transfer_height: int
    transfer_timestamp: int
    delivery_tx_id: bytes | None = None
    delivery_height: int | None = None
    settle_tx_id: bytes | None = None
    settle_height: int | None = None
    settled_amount: int | None = None

    @property
    def delivered(self) -> bool:
        return self.delivery_tx_id is not None

    @property
    def settled(self) -> bool:
        return self.settle_tx_id is not None


@dataclass
class LotState:
    """Committed view of one lot."""

    lot_id: bytes
    quantity_kg: int
    farm_location: str
    base_price_paise_per_kg: int
    custodian: bytes
    custodian_role: Role
    registered_height: int
    seed_supplier_ref: str | None = None
    legs: list[Leg] = field(default_factory=list)
    quality_history: list[tuple[bytes, int, QualityReport, str | None]] = field(default_factory=list)
    history: list[tuple[bytes, LotEvent, int]] = field(default_factory=list)

    @property
    def pending_transfer(self) -> Leg | None:
        if self.legs and not self.legs[-1].delivered:
            return self.legs[-1]
        return None

    @property
    def outstanding_payment(self) -> tuple[bytes, bytes, int] | None:
        """(payer, payee, amount) for the delivered-but-unsettled leg, if any."""
        for leg in self.legs:
            if leg.delivered and not leg.settled:
                amount = self.quantity_kg * leg.price_paise_per_kg
                return leg.actor_to, leg.actor_from, amount
        return None

    @property
    def settled(self) -> bool:
        return self.outstanding_payment is None and self.pending_transfer is None

    @property
    def consumed(self) -> bool:
        return self.custodian_role is Role.CONSUMER

    def clone(self) -> "LotState":
        return LotState(
            lot_id=self.lot_id,
            quantity_kg=self.quantity_kg,
            farm_location=self.farm_location,
            base_price_paise_per_kg=self.base_price_paise_per_kg,
            custodian=self.custodian,
            custodian_role=self.custodian_role,
            registered_height=self.registered_height,
            seed_supplier_ref=self.seed_supplier_ref,
            legs=[replace(leg) for leg in self.legs],
            quality_history=list(self.quality_history),
            history=list(self.history),
        )


@dataclass(frozen=True)
class Violation:
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


def validate_transition(
    state: LotState | None,
    event: LotEvent,
    mode: SettlementMode = SettlementMode.AUTO,
) -> Violation | None:
    """Pure transition check; returns a Violation instead of raising."""
    if isinstance(event, LotRegistered):
        if state is not None:
            return Violation("IllegalTransition", "lot already registered")
        if event.quantity_kg <= 0:
            return Violation("IllegalTransition", "quantity_kg must be positive")
        if event.price_paise_per_kg <= 0:
            return Violation("IllegalTransition", "price must be positive")
        return None

    if state is None:
        return Violation("UnknownLot", "lot is not registered")

    if isinstance(event, QualityUpdate):
        if state.consumed:
            return Violation("IllegalTransition", "lot already consumed")
        return None

    if isinstance(event, Transfer):
        if event.actor_from == event.actor_to:
            return Violation("IllegalTransition", "transfer to self")
        if event.actor_from != state.custodian:
            return Violation("StaleCustody", "actor_from is not the current custodian")
        if state.pending_transfer is not None:
            return Violation("IllegalTransition", "a transfer is already pending")
        if event.price_paise_per_kg <= 0:
            return Violation("IllegalTransition", "price must be positive")
        if mode is SettlementMode.AUTO and state.outstanding_payment is not None:
            return Violation("IllegalTransition", "prior leg not yet settled (auto mode)")
        if next_custody_role(state.custodian_role) is None:
            return Violation("IllegalTransition", "lot is at the end of the custody chain")
        return None

    if isinstance(event, DeliveryConfirmed):
        pending = state.pending_transfer
        if pending is None:
            return Violation("IllegalTransition", "no pending transfer to confirm")
        if event.transfer_tx_id != pending.transfer_tx_id:
            return Violation("IllegalTransition", "delivery does not match the pending transfer")
        return None

    if isinstance(event, PaymentSettled):
        outstanding = state.outstanding_payment
        if outstanding is None:
            return Violation("IllegalTransition", "no outstanding payment")
        payer, payee, amount = outstanding
        leg = next(l for l in state.legs if l.delivered and not l.settled)
        if event.delivery_tx_id != leg.delivery_tx_id:
            return Violation("IllegalTransition", "settlement does not reference the delivered leg")
        if event.payer != payer or event.payee != payee:
            return Violation("IllegalTransition", "settlement parties do not match the leg")
        if event.amount_paise != amount:
            return Violation(
                "IllegalTransition",
                f"settlement amount {event.amount_paise} != quantity x price {amount}",
            )
        return None

    return Violation("IllegalTransition", f"unsupported event {type(event).__name__}")


def role_for_transfer_target(state: LotState) -> Role | None:
    return next_custody_role(state.custodian_role)


def apply_event(state: LotState | None, tx: SignedTransaction, height: int) -> LotState:
    """Apply a validated event; `validate_transition` must have passed."""
    event = tx.payload
    if isinstance(event, LotRegistered):
        new = LotState(
            lot_id=tx.tx_id,
            quantity_kg=event.quantity_kg,
            farm_location=event.farm_location,
            base_price_paise_per_kg=event.price_paise_per_kg,
            custodian=tx.submitter,
            custodian_role=Role.FARMER,
            registered_height=height,
            seed_supplier_ref=event.seed_supplier_ref,
        )
        if event.quality is not None:
            new.quality_history.append((tx.tx_id, height, event.quality, None))
        new.history.append((tx.tx_id, event, height))
        return new

    assert state is not None
    if isinstance(event, QualityUpdate):
        state.quality_history.append((tx.tx_id, height, event.quality, event.mill_info))
    elif isinstance(event, Transfer):
        to_role = next_custody_role(state.custodian_role)
        assert to_role is not None
        state.legs.append(
            Leg(
                transfer_tx_id=tx.tx_id,
                actor_from=event.actor_from,
                actor_to=event.actor_to,
                role_from=state.custodian_role,
                role_to=to_role,
                price_paise_per_kg=event.price_paise_per_kg,
                transfer_height=height,
                transfer_timestamp=tx.timestamp,
            )
        )
    elif isinstance(event, DeliveryConfirmed):
        leg = state.legs[-1]
        leg.delivery_tx_id = tx.tx_id
        leg.delivery_height = height
        state.custodian = leg.actor_to
        state.custodian_role = leg.role_to
    elif isinstance(event, PaymentSettled):
        leg = next(l for l in state.legs if l.delivered and not l.settled)
        leg.settle_tx_id = tx.tx_id
        leg.settle_height = height
        leg.settled_amount = event.amount_paise
    state.history.append((tx.tx_id, event, height))
    return state


def auto_settle(lots: dict[bytes, LotState]) -> list[PaymentSettled]:
    """Settlement events owed on the committed state, in (lot_id, leg) order.

    Already-settled legs produce nothing, so running this twice on the same
    tip emits an empty list the second time.
    """
    events: list[PaymentSettled] = []
    for lot_id in sorted(lots):
        state = lots[lot_id]
        for leg in state.legs:
            if leg.delivered and not leg.settled:
                assert leg.delivery_tx_id is not None
                events.append(
                    PaymentSettled(
                        lot_id=lot_id,
                        delivery_tx_id=leg.delivery_tx_id,
                        payer=leg.actor_to,
                        payee=leg.actor_from,
                        amount_paise=state.quantity_kg * leg.price_paise_per_kg,
                    )
                )
    return events


# -- provenance ------------------------------------------------------------

@dataclass(frozen=True)
class ProvenanceLeg:
    role_from: Role
    role_to: Role
    tx_id: bytes
    timestamp: int
    price_paise_per_kg: int
    delivered: bool
    settled: bool


@dataclass(frozen=True)
class LotProvenance:
    """The reconstructed journey of one lot through the actor chain."""

    lot_id: bytes
    quantity_kg: int
    farm_location: str
    registered_by: bytes
    registered_height: int
    seed_supplier_ref: str | None
    legs: tuple[ProvenanceLeg, ...]
    quality_timeline: tuple[tuple[bytes, int, QualityReport], ...]

    def describe(self) -> str:
        lines = [f"lot {self.lot_id.hex()}"]
        lines.append(f"  registered at height {self.registered_height} ({self.quantity_kg} kg, {self.farm_location})")
        for leg in self.legs:
            status = "settled" if leg.settled else ("delivered" if leg.delivered else "in transit")
            lines.append(
                f"  {leg.role_from.name} -> {leg.role_to.name}"
                f" tx {leg.tx_id.hex()[:16]} @ {leg.price_paise_per_kg} paise/kg [{status}]"
            )
        for tx_id, height, report in self.quality_timeline:
            worms = "worms" if report.affected_by_worms else "no worms"
            lines.append(
                f"  quality @ height {height}: grade {report.grade},"
                f" moisture {report.moisture_tenths_pct / 10:.1f}%, {worms}"
            )
        return "\n".join(lines)


def replay_lot(chain: Chain, lot_id: bytes) -> LotState:
    """Rebuild one lot's state strictly from committed blocks."""
    state: LotState | None = None
    for block in chain.blocks:
        for tx in block.transactions:
            event = tx.payload
            if isinstance(event, LotRegistered):
                if tx.tx_id == lot_id:
                    state = apply_event(None, tx, block.height)
            elif isinstance(event, (QualityUpdate, Transfer, DeliveryConfirmed, PaymentSettled)):
                if state is not None and event.lot_id == lot_id:
                    state = apply_event(state, tx, block.height)
    if state is None:
        raise UnknownLot(f"unknown lot {lot_id.hex()}")
    return state


def trace_lot(chain: Chain, lot_id: bytes) -> LotProvenance:
    """Deterministic provenance: a pure function of the committed chain."""
    state = replay_lot(chain, lot_id)
    legs = tuple(
        ProvenanceLeg(
            role_from=leg.role_from,
            role_to=leg.role_to,
            tx_id=leg.transfer_tx_id,
            timestamp=leg.transfer_timestamp,
            price_paise_per_kg=leg.price_paise_per_kg,
            delivered=leg.delivered,
            settled=leg.settled,
        )
        for leg in state.legs
    )
    registered_tx, _ = _registration(state)
    return LotProvenance(
        lot_id=lot_id,
        quantity_kg=state.quantity_kg,
        farm_location=state.farm_location,
        registered_by=registered_tx,
        registered_height=state.registered_height,
        seed_supplier_ref=state.seed_supplier_ref,
        legs=legs,
        quality_timeline=tuple((t, h, q) for t, h, q, _ in state.quality_history),
    )


def _registration(state: LotState) -> tuple[bytes, int]:
    registrant = state.legs[0].actor_from if state.legs else state.custodian
    return registrant, state.registered_height


@dataclass(frozen=True)
class LegLatency:
    leg_index: int
    role_from: Role
    role_to: Role
    delivery_height: int
    settle_height: int | None
    blocks_to_settle: int | None

    @property
    def outstanding(self) -> bool:
        return self.settle_height is None


def payment_latency(chain: Chain, lot_id: bytes) -> list[LegLatency]:
    """Block-height gap between delivery and settlement for each delivered leg."""
    state = replay_lot(chain, lot_id)
    result: list[LegLatency] = []
    for i, leg in enumerate(state.legs):
        if not leg.delivered:
            continue
        assert leg.delivery_height is not None
        gap = None if leg.settle_height is None else leg.settle_height - leg.delivery_height
        result.append(
            LegLatency(
                leg_index=i,
                role_from=leg.role_from,
                role_to=leg.role_to,
                delivery_height=leg.delivery_height,
                settle_height=leg.settle_height,
                blocks_to_settle=gap,
            )
        )
    return result
