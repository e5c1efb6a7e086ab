"""Append-only hash-chained block store with tamper-evident verification.

A block's hash covers its header; the header's tx_root is the digest of the
ordered tx_id list, and each tx_id is the digest of the signed transaction
body, so a single flipped byte anywhere surfaces during verification.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from . import payloads
from .codec import Reader, Writer, decode_exact
from .crypto import (
    ZERO_DIGEST,
    SigningKey,
    hash_canonical,
    verify_signature,
)
from .errors import (
    BadBlockHash,
    BadHeight,
    BadPrevHash,
    BadProposerSignature,
    BadTransaction,
    BadTxRoot,
    DecodeError,
    DuplicateTransaction,
    DuplicateValidator,
    EmptyValidatorSet,
    NotFound,
)

GENESIS_TIMESTAMP = 0


@dataclass(frozen=True)
class SignedTransaction:
    """One committed event: signed envelope around an identity or lot payload."""

    submitter: bytes
    payload: payloads.Payload
    timestamp: int
    signature: bytes
    tx_id: bytes

    @property
    def tx_id_hex(self) -> str:
        return self.tx_id.hex()

    def body_bytes(self) -> bytes:
        return _tx_body(self.submitter, self.payload, self.timestamp)

    def encode(self) -> bytes:
        w = Writer()
        w.raw(self.body_bytes())
        w.bytes_(self.signature)
        return w.getvalue()


def _tx_body(submitter: bytes, payload: payloads.Payload, timestamp: int) -> bytes:
    w = Writer()
    w.bytes_(submitter)
    payloads.write_payload(w, payload)
    w.u64(timestamp)
    return w.getvalue()


def build_transaction(key: SigningKey, payload: payloads.Payload, timestamp: int) -> SignedTransaction:
    """Sign a payload; the tx_id is the digest of the canonical body."""
    body = _tx_body(key.public_bytes, payload, timestamp)
    return SignedTransaction(
        submitter=key.public_bytes,
        payload=payload,
        timestamp=timestamp,
        signature=key.sign(body),
        tx_id=hash_canonical(body),
    )


def read_transaction(r: Reader) -> SignedTransaction:
    submitter = r.bytes_()
    payload = payloads.read_payload(r)
    timestamp = r.u64()
    signature = r.bytes_()
    body = _tx_body(submitter, payload, timestamp)
    return SignedTransaction(
        submitter=submitter,
        payload=payload,
        timestamp=timestamp,
        signature=signature,
        tx_id=hash_canonical(body),
    )


def decode_transaction(data: bytes) -> SignedTransaction:
    return decode_exact(data, read_transaction)


def check_transaction(tx: SignedTransaction) -> None:
    """Structural check: recomputable tx_id and a valid submitter signature."""
    body = tx.body_bytes()
    if hash_canonical(body) != tx.tx_id:
        raise BadTransaction(f"tx_id mismatch for {tx.tx_id_hex}")
    if not verify_signature(tx.submitter, tx.signature, body):
        raise BadTransaction(f"bad signature on {tx.tx_id_hex}")


def compute_tx_root(transactions: tuple[SignedTransaction, ...]) -> bytes:
    return hash_canonical(b"".join(tx.tx_id for tx in transactions))


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    tx_root: bytes
    proposer: bytes
    timestamp: int
    extension: bytes
    proposer_signature: bytes
    transactions: tuple[SignedTransaction, ...]
    block_hash: bytes

    def header_bytes(self) -> bytes:
        return _block_header(
            self.height, self.prev_hash, self.tx_root, self.proposer, self.timestamp, self.extension
        )

    def encode(self) -> bytes:
        w = Writer()
        w.raw(self.header_bytes())
        w.bytes_(self.proposer_signature)
        w.sequence(self.transactions, lambda wr, tx: wr.raw(tx.encode()))
        return w.getvalue()


def _block_header(
    height: int, prev_hash: bytes, tx_root: bytes, proposer: bytes, timestamp: int, extension: bytes
) -> bytes:
    w = Writer()
    w.u64(height)
    w.bytes_(prev_hash)
    w.bytes_(tx_root)
    w.bytes_(proposer)
    w.u64(timestamp)
    w.bytes_(extension)
    return w.getvalue()


def build_block(
    height: int,
    prev_hash: bytes,
    transactions: tuple[SignedTransaction, ...],
    proposer_key: SigningKey,
    timestamp: int,
    extension: bytes = b"",
) -> Block:
    tx_root = compute_tx_root(transactions)
    header = _block_header(height, prev_hash, tx_root, proposer_key.public_bytes, timestamp, extension)
    return Block(
        height=height,
        prev_hash=prev_hash,
        tx_root=tx_root,
        proposer=proposer_key.public_bytes,
        timestamp=timestamp,
        extension=extension,
        proposer_signature=proposer_key.sign(header),
        transactions=transactions,
        block_hash=hash_canonical(header),
    )


def read_block(r: Reader) -> Block:
    height = r.u64()
    prev_hash = r.bytes_()
    tx_root = r.bytes_()
    proposer = r.bytes_()
    timestamp = r.u64()
    extension = r.bytes_()
    signature = r.bytes_()
    transactions = tuple(r.sequence(read_transaction))
    header = _block_header(height, prev_hash, tx_root, proposer, timestamp, extension)
    return Block(
        height=height,
        prev_hash=prev_hash,
        tx_root=tx_root,
        proposer=proposer,
        timestamp=timestamp,
        extension=extension,
        proposer_signature=signature,
        transactions=transactions,
        block_hash=hash_canonical(header),
    )


def decode_block(data: bytes) -> Block:
    return decode_exact(data, read_block)


# -- genesis ---------------------------------------------------------------

def genesis_extension(validator_set: list[str], chain_id: str) -> bytes:
    w = Writer()
    w.text(chain_id)
    w.sequence([bytes.fromhex(v) for v in validator_set], Writer.bytes_)
    return w.getvalue()


def parse_genesis_extension(extension: bytes) -> tuple[str, tuple[str, ...]]:
    def read(r: Reader) -> tuple[str, tuple[str, ...]]:
        chain_id = r.text()
        validators = tuple(v.hex() for v in r.sequence(Reader.bytes_))
        return chain_id, validators

    return decode_exact(extension, read)


def make_genesis(validator_set: list[str], chain_id: str) -> Block:
    """Deterministic height-0 block embedding the validator set."""
    if not validator_set:
        raise EmptyValidatorSet("validator set must not be empty")
    if len(set(validator_set)) != len(validator_set):
        raise DuplicateValidator("validator set contains duplicates")
    extension = genesis_extension(validator_set, chain_id)
    tx_root = compute_tx_root(())
    header = _block_header(0, ZERO_DIGEST, tx_root, ZERO_DIGEST, GENESIS_TIMESTAMP, extension)
    return Block(
        height=0,
        prev_hash=ZERO_DIGEST,
        tx_root=tx_root,
        proposer=ZERO_DIGEST,
        timestamp=GENESIS_TIMESTAMP,
        extension=extension,
        proposer_signature=b"",
        transactions=(),
        block_hash=hash_canonical(header),
    )


# -- chain -----------------------------------------------------------------

@dataclass(frozen=True)
class VerificationReport:
    ok: bool
    bad_height: int | None = None
    reason: str | None = None

    def describe(self) -> str:
        if self.ok:
            return "ok"
        return f"failed at height {self.bad_height}: {self.reason}"


class Chain:
    """Ordered block sequence; single-writer appends, snapshot-friendly reads."""

    def __init__(self, blocks: list[Block]) -> None:
        if not blocks:
            raise ValueError("chain needs at least a genesis block")
        self._blocks = list(blocks)
        self._tx_index: dict[bytes, tuple[int, int]] = {}
        for block in self._blocks:
            for i, tx in enumerate(block.transactions):
                self._tx_index[tx.tx_id] = (block.height, i)
        self._write_lock = threading.Lock()

    @classmethod
    def from_genesis(cls, genesis: Block) -> "Chain":
        return cls([genesis])

    @property
    def blocks(self) -> list[Block]:
        return self._blocks

    @property
    def tip(self) -> Block:
        return self._blocks[-1]

    @property
    def height(self) -> int:
        return self._blocks[-1].height

    @property
    def genesis(self) -> Block:
        return self._blocks[0]

    def validator_set(self) -> tuple[str, ...]:
        _, validators = parse_genesis_extension(self.genesis.extension)
        return validators

    def chain_id(self) -> str:
        chain_id, _ = parse_genesis_extension(self.genesis.extension)
        return chain_id

    def has_tx(self, tx_id: bytes) -> bool:
        return tx_id in self._tx_index

    def snapshot(self) -> "Chain":
        """Shallow copy safe to hand to another thread; blocks are immutable."""
        return Chain(list(self._blocks))


def verify_block(tip: Block, block: Block, validator_set: tuple[str, ...] | None = None) -> None:
    """Structural and cryptographic checks of one block against the tip."""
    if block.prev_hash != tip.block_hash:
        raise BadPrevHash(f"prev_hash does not match tip at height {tip.height}")
    if block.height != tip.height + 1:
        raise BadHeight(f"expected height {tip.height + 1}, got {block.height}")
    if hash_canonical(block.header_bytes()) != block.block_hash:
        raise BadBlockHash(f"stored block_hash does not match header at height {block.height}")
    if compute_tx_root(block.transactions) != block.tx_root:
        raise BadTxRoot(f"tx_root mismatch at height {block.height}")
    if validator_set is not None and block.proposer.hex() not in validator_set:
        raise BadProposerSignature(f"proposer not in validator set at height {block.height}")
    if not verify_signature(block.proposer, block.proposer_signature, block.header_bytes()):
        raise BadProposerSignature(f"bad proposer signature at height {block.height}")
    for tx in block.transactions:
        check_transaction(tx)


def append_block(chain: Chain, block: Block) -> Chain:
    """Extend the chain by one verified block; prior blocks are untouched."""
    with chain._write_lock:
        verify_block(chain.tip, block, chain.validator_set())
        seen: set[bytes] = set()
        for tx in block.transactions:
            if chain.has_tx(tx.tx_id) or tx.tx_id in seen:
                raise DuplicateTransaction(f"tx {tx.tx_id_hex} already committed")
            seen.add(tx.tx_id)
        chain._blocks.append(block)
        for i, tx in enumerate(block.transactions):
            chain._tx_index[tx.tx_id] = (block.height, i)
    return chain


def verify_chain(chain: Chain) -> VerificationReport:
    """Full re-verification from raw bytes; reports the lowest failing height."""
    blocks = chain.blocks
    genesis = blocks[0]
    if genesis.height != 0:
        return VerificationReport(False, 0, "genesis height is not 0")
    if genesis.prev_hash != ZERO_DIGEST:
        return VerificationReport(False, 0, "genesis prev_hash is not zero")
    if genesis.transactions:
        return VerificationReport(False, 0, "genesis carries transactions")
    if hash_canonical(genesis.header_bytes()) != genesis.block_hash:
        return VerificationReport(False, 0, "genesis block_hash mismatch")
    if compute_tx_root(genesis.transactions) != genesis.tx_root:
        return VerificationReport(False, 0, "genesis tx_root mismatch")
    try:
        _, validators = parse_genesis_extension(genesis.extension)
    except DecodeError as exc:
        return VerificationReport(False, 0, f"genesis extension: {exc}")

    seen_tx: set[bytes] = set()
    # report the walk position, not block.height: a tampered height field
    # would otherwise smuggle its own garbage into the report
    for position, block in enumerate(blocks[1:], start=1):
        try:
            verify_block(blocks[position - 1], block, validators)
        except Exception as exc:
            return VerificationReport(False, position, str(exc))
        for tx in block.transactions:
            if tx.tx_id in seen_tx:
                return VerificationReport(False, position, f"duplicate tx {tx.tx_id_hex}")
            seen_tx.add(tx.tx_id)
    return VerificationReport(True)


def get_transaction(chain: Chain, tx_id: bytes) -> tuple[SignedTransaction, int]:
    """Look up a committed transaction by id; returns (tx, block height)."""
    where = chain._tx_index.get(tx_id)
    if where is None:
        raise NotFound(f"transaction {tx_id.hex()} not found")
    height, index = where
    offset = height - chain.blocks[0].height
    return chain.blocks[offset].transactions[index], height
