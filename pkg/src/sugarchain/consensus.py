"""Round-robin proof-of-authority: who proposes, what goes in, what counts.

There is no vote quorum.  A block commits on a node the moment a validly
signed proposal from the correctly rotated validator passes full validation
locally; first valid proposal at a height wins.  Timeout handling works by
offset: a node that has seen k proposer timeouts at the current height
expects validators[(height - 1 + k) mod n] instead.
"""

from __future__ import annotations

from dataclasses import dataclass

from .crypto import SigningKey
from .errors import (
    DuplicateValidator,
    EmptyMempoolPolicy,
    EmptyValidatorSet,
    NotMyTurn,
    SugarChainError,
)
from .ledger import (
    Block,
    Chain,
    SignedTransaction,
    build_block,
    build_transaction,
    check_transaction,
    verify_block,
)
from .state import ChainState


@dataclass(frozen=True)
class ValidatorSet:
    """Fixed at genesis; epoch reserved for future membership changes."""

    validators: tuple[str, ...]
    epoch: int = 0

    def __post_init__(self) -> None:
        if not self.validators:
            raise EmptyValidatorSet("validator set must not be empty")
        if len(set(self.validators)) != len(self.validators):
            raise DuplicateValidator("validator set contains duplicates")

    def __len__(self) -> int:
        return len(self.validators)

    def __contains__(self, user_id: str) -> bool:
        return user_id in self.validators


def expected_proposer(validator_set: ValidatorSet, height: int, offset: int = 0) -> str:
    """Authority for `height`, shifted by `offset` timeout skips."""
    if height < 1:
        raise ValueError("height must be >= 1")
    return validator_set.validators[(height - 1 + offset) % len(validator_set)]


class Mempool:
    """Pending transactions, deduplicated, drained in (timestamp, tx_id) order."""

    def __init__(self) -> None:
        self._txs: dict[bytes, SignedTransaction] = {}

    def __len__(self) -> int:
        return len(self._txs)

    def __contains__(self, tx_id: bytes) -> bool:
        return tx_id in self._txs

    def add(self, tx: SignedTransaction) -> bool:
        if tx.tx_id in self._txs:
            return False
        self._txs[tx.tx_id] = tx
        return True

    def remove(self, tx_id: bytes) -> None:
        self._txs.pop(tx_id, None)

    def matured(self, max_timestamp: int | None = None) -> list[SignedTransaction]:
        """Sorted pending txs, optionally only those stamped <= max_timestamp."""
        txs = self._txs.values()
        if max_timestamp is not None:
            txs = [tx for tx in txs if tx.timestamp <= max_timestamp]
        return sorted(txs, key=lambda tx: (tx.timestamp, tx.tx_id))


@dataclass(frozen=True)
class AuditEntry:
    """Why a pending transaction was left out of a proposal."""

    tx_id: bytes
    reason: str

    def __str__(self) -> str:
        return f"dropped {self.tx_id.hex()[:16]}: {self.reason}"


def propose_block(
    chain: Chain,
    state: ChainState,
    pending: list[SignedTransaction],
    proposer_key: SigningKey,
    timestamp: int,
    offset: int = 0,
    allow_empty: bool = False,
) -> tuple[Block, list[AuditEntry]]:
    """Assemble the next block: owed settlements first, then valid pending txs.

    Invalid transactions are excluded, not fatal; each exclusion is returned
    as an audit entry.  Raises NotMyTurn unless this key holds the rotation
    slot, and EmptyMempoolPolicy when nothing survives and empty blocks are
    not allowed.
    """
    validator_set = ValidatorSet(state.validator_set)
    height = chain.height + 1
    if proposer_key.user_id != expected_proposer(validator_set, height, offset):
        raise NotMyTurn(f"validator {proposer_key.user_id[:16]} does not hold height {height}")

    speculative = state.clone()
    accepted: list[SignedTransaction] = []
    audit: list[AuditEntry] = []

    for settlement in speculative.pending_settlements():
        tx = build_transaction(proposer_key, settlement, timestamp)
        violation = speculative.validate_tx(tx)
        if violation is not None:
            audit.append(AuditEntry(tx.tx_id, f"settlement: {violation}"))
            continue
        speculative.apply_tx(tx, height)
        accepted.append(tx)

    for tx in pending:
        try:
            check_transaction(tx)
        except SugarChainError as exc:
            audit.append(AuditEntry(tx.tx_id, str(exc)))
            continue
        if chain.has_tx(tx.tx_id) or any(tx.tx_id == a.tx_id for a in accepted):
            audit.append(AuditEntry(tx.tx_id, "duplicate of a committed transaction"))
            continue
        violation = speculative.validate_tx(tx)
        if violation is not None:
            audit.append(AuditEntry(tx.tx_id, str(violation)))
            continue
        speculative.apply_tx(tx, height)
        accepted.append(tx)

    if not accepted and not allow_empty:
        raise EmptyMempoolPolicy("no admissible transactions and empty blocks are disabled")

    block = build_block(height, chain.tip.block_hash, accepted, proposer_key, timestamp)
    return block, audit


@dataclass(frozen=True)
class ProposalVerdict:
    accepted: bool
    reason: str | None = None
    detail: str | None = None

    def __str__(self) -> str:
        if self.accepted:
            return "accept"
        return f"reject({self.reason}): {self.detail}"


def validate_proposal(
    chain: Chain,
    state: ChainState,
    block: Block,
    max_offset: int = 0,
) -> ProposalVerdict:
    """Full local check of a proposal; never raises, rejects carry a reason.

    max_offset is the timeout slack: a proposer is in turn if it matches any
    offset in [0, max_offset].
    """
    try:
        verify_block(chain.tip, block, chain.validator_set())
    except SugarChainError as exc:
        return ProposalVerdict(False, exc.code, str(exc))

    validator_set = ValidatorSet(state.validator_set)
    allowed = {
        expected_proposer(validator_set, block.height, k) for k in range(max_offset + 1)
    }
    if block.proposer.hex() not in allowed:
        return ProposalVerdict(
            False, "WrongProposer", f"{block.proposer.hex()[:16]} is out of rotation"
        )

    speculative = state.clone()
    for tx in block.transactions:
        if chain.has_tx(tx.tx_id):
            return ProposalVerdict(False, "BadTx", f"{tx.tx_id_hex[:16]} already committed")
        violation = speculative.validate_tx(tx)
        if violation is not None:
            return ProposalVerdict(False, "BadTx", f"{tx.tx_id_hex[:16]}: {violation}")
        speculative.apply_tx(tx, block.height)

    return ProposalVerdict(True)
