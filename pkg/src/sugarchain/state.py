"""Committed chain state: who exists, who holds what, and what is owed.

One fold over the blocks produces the state every other layer consults.
Validation is split in two: `check_transaction` (ledger) proves structure
and signature, `ChainState.validate_tx` proves authorization and state
transitions.  Both must pass before a transaction enters a block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import BadTransaction
from .identity import UserRecord
from .ledger import Block, Chain, SignedTransaction
from .payloads import (
    CredentialRotated,
    DeliveryConfirmed,
    LotRegistered,
    PaymentSettled,
    QualityUpdate,
    Role,
    Transfer,
    UserRegistered,
    next_custody_role,
)
from .supplychain import (
    LotState,
    SettlementMode,
    SettlementRule,
    Violation,
    apply_event,
    auto_settle,
    validate_transition,
)


@dataclass
class ChainState:
    """Deterministic fold of committed blocks; clone before speculating."""

    validator_set: tuple[str, ...]
    rule: SettlementRule = field(default_factory=SettlementRule)
    users: dict[bytes, UserRecord] = field(default_factory=dict)
    lots: dict[bytes, LotState] = field(default_factory=dict)
    height: int = 0

    @classmethod
    def from_chain(cls, chain: Chain, rule: SettlementRule | None = None) -> "ChainState":
        state = cls(validator_set=chain.validator_set(), rule=rule or SettlementRule())
        for block in chain.blocks[1:]:
            state.apply_block(block)
        return state

    def clone(self) -> "ChainState":
        return ChainState(
            validator_set=self.validator_set,
            rule=self.rule,
            users={uid: record.clone() for uid, record in self.users.items()},
            lots={lid: lot.clone() for lid, lot in self.lots.items()},
            height=self.height,
        )

    def is_validator(self, user_id: bytes) -> bool:
        return user_id.hex() in self.validator_set

    def role_of(self, user_id: bytes) -> Role | None:
        record = self.users.get(user_id)
        return record.role if record is not None else None

    # -- validation --------------------------------------------------------

    def validate_tx(self, tx: SignedTransaction) -> Violation | None:
        """Authorization plus state transition; None means admissible."""
        payload = tx.payload

        if isinstance(payload, UserRegistered):
            if tx.submitter in self.users:
                return Violation("AlreadyRegistered", "user_id already on the ledger")
            return None

        if isinstance(payload, CredentialRotated):
            if payload.user_id not in self.users:
                return Violation("UnknownUser", "rotation targets an unregistered user")
            if tx.submitter != payload.user_id and not self.is_validator(tx.submitter):
                return Violation("Unauthorized", "rotation must come from the user or a validator")
            return None

        if isinstance(payload, LotRegistered):
            if self.role_of(tx.submitter) is not Role.FARMER:
                return Violation("Unauthorized", "only a registered farmer may open a lot")
            if tx.tx_id in self.lots:
                return Violation("IllegalTransition", "lot already registered")
            return validate_transition(None, payload, self.rule.mode)

        lot = self.lots.get(payload.lot_id)

        if isinstance(payload, QualityUpdate):
            if lot is None:
                return Violation("UnknownLot", "lot is not registered")
            submitter_role = self.role_of(tx.submitter)
            if tx.submitter != lot.custodian and submitter_role is not Role.SUGAR_MILL:
                return Violation("Unauthorized", "quality updates need the custodian or a mill")
            return validate_transition(lot, payload, self.rule.mode)

        if isinstance(payload, Transfer):
            if lot is None:
                return Violation("UnknownLot", "lot is not registered")
            if tx.submitter != payload.actor_from:
                return Violation("Unauthorized", "transfer must be signed by actor_from")
            expected_role = next_custody_role(lot.custodian_role)
            target_role = self.role_of(payload.actor_to)
            if target_role is None:
                return Violation("UnknownUser", "actor_to is not registered")
            if expected_role is not None and target_role is not expected_role:
                return Violation(
                    "IllegalTransition",
                    f"custody moves {lot.custodian_role.name} -> {expected_role.name},"
                    f" not to a {target_role.name}",
                )
            return validate_transition(lot, payload, self.rule.mode)

        if isinstance(payload, DeliveryConfirmed):
            if lot is None:
                return Violation("UnknownLot", "lot is not registered")
            pending = lot.pending_transfer
            if pending is not None and tx.submitter != pending.actor_to:
                return Violation("Unauthorized", "delivery must be confirmed by the receiver")
            return validate_transition(lot, payload, self.rule.mode)

        if isinstance(payload, PaymentSettled):
            if lot is None:
                return Violation("UnknownLot", "lot is not registered")
            if tx.submitter != payload.payer and not self.is_validator(tx.submitter):
                return Violation("Unauthorized", "settlement must come from the payer or a validator")
            return validate_transition(lot, payload, self.rule.mode)

        return Violation("IllegalTransition", f"unsupported payload {type(payload).__name__}")

    # -- application -------------------------------------------------------

    def apply_tx(self, tx: SignedTransaction, height: int) -> None:
        """Mutate state; only call after validate_tx returned None."""
        payload = tx.payload
        if isinstance(payload, UserRegistered):
            self.users[tx.submitter] = UserRecord.from_registration(
                tx.submitter, payload, tx.timestamp
            )
        elif isinstance(payload, CredentialRotated):
            self.users[payload.user_id].apply_rotation(payload)
        elif isinstance(payload, LotRegistered):
            self.lots[tx.tx_id] = apply_event(None, tx, height)
        else:
            lot = self.lots[payload.lot_id]
            apply_event(lot, tx, height)

    def apply_block(self, block: Block) -> None:
        """Validate-then-apply every transaction; all-or-nothing per tx order."""
        for tx in block.transactions:
            violation = self.validate_tx(tx)
            if violation is not None:
                raise BadTransaction(
                    f"height {block.height} tx {tx.tx_id_hex[:16]}: {violation}"
                )
            self.apply_tx(tx, block.height)
        self.height = block.height

    def pending_settlements(self) -> list[PaymentSettled]:
        """What auto mode owes on this state, deterministic order."""
        if self.rule.mode is not SettlementMode.AUTO:
            return []
        return auto_settle(self.lots)
