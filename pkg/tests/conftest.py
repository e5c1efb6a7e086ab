from __future__ import annotations

from pathlib import Path
from random import Random

import pytest

from sugarchain.consensus import propose_block
from sugarchain.crypto import FAST_KDF, SigningKey
from sugarchain.identity import build_registration
from sugarchain.ledger import (
    Chain,
    SignedTransaction,
    append_block,
    build_transaction,
    make_genesis,
)
from sugarchain.node import NodeConfig, SugarNode, init_node
from sugarchain.payloads import Payload, Role
from sugarchain.state import ChainState
from sugarchain.supplychain import SettlementMode, SettlementRule

RECOVERY = [("first pet", "rex"), ("birth town", "pune"), ("first crop", "cane")]


class ChainHarness:
    """One validator, one chain, committed state; commits one block per call.

    All randomness comes from the seed so tests replay identically; the fast
    scrypt profile keeps registration cheap.
    """

    def __init__(self, seed: str = "harness", mode: SettlementMode = SettlementMode.AUTO):
        self.rng = Random(seed)
        self.validator = SigningKey.from_seed(self.rng.randbytes(32))
        genesis = make_genesis([self.validator.user_id], chain_id="test")
        self.chain = Chain.from_genesis(genesis)
        self.state = ChainState.from_chain(self.chain, SettlementRule(mode=mode))
        self.clock_ms = 1_000
        self.keys: dict[str, SigningKey] = {}

    def now(self) -> int:
        self.clock_ms += 7
        return self.clock_ms

    def commit(self, txs: list[SignedTransaction]) -> None:
        block, audit = propose_block(
            self.chain, self.state, txs, self.validator, self.now()
        )
        if audit:
            raise AssertionError(f"harness tx rejected: {audit[0].reason}")
        append_block(self.chain, block)
        self.state.apply_block(block)

    def submit(self, key: SigningKey, payload: Payload) -> SignedTransaction:
        tx = build_transaction(key, payload, self.now())
        self.commit([tx])
        return tx

    def settle_due(self) -> int:
        """Commit settlement-only blocks until nothing is owed; returns count."""
        blocks = 0
        while self.state.pending_settlements():
            block, _ = propose_block(
                self.chain, self.state, [], self.validator, self.now(), allow_empty=True
            )
            append_block(self.chain, block)
            self.state.apply_block(block)
            blocks += 1
        return blocks

    def user(self, name: str, role: Role) -> SigningKey:
        if name in self.keys:
            return self.keys[name]
        key, payload = build_registration(
            name,
            f"{name}@farm.example",
            "9800000000",
            f"pw-{name}-test",
            role,
            RECOVERY,
            kdf=FAST_KDF,
            rng=self.rng,
        )
        self.submit(key, payload)
        self.keys[name] = key
        return key


class NodeBox:
    """A freshly initialized node over tmp storage with a hand-cranked clock."""

    def __init__(self, tmp_path: Path, mode: SettlementMode = SettlementMode.AUTO):
        self.config = NodeConfig(
            data_dir=tmp_path / "data",
            chain_id="nodetest",
            kdf_profile="fast",
            settlement=SettlementRule(mode=mode),
        )
        self.rng = Random("nodebox")
        init_node(self.config, rng=self.rng)
        self.now = [1_700_000_000.0]
        self.node = SugarNode(self.config, clock=lambda: self.now[0])

    def tick(self, seconds: float = 1.0) -> None:
        self.now[0] += seconds

    def reopen(self) -> SugarNode:
        self.node = SugarNode(self.config, clock=lambda: self.now[0])
        return self.node

    def register(self, name: str, role: Role):
        self.tick()
        return self.node.register_user(
            name, f"{name}@x.example", "9800000001", f"pw-{name}-test", role, RECOVERY, rng=self.rng
        )

    def submit(self, key: SigningKey, payload: Payload):
        self.tick()
        tx = build_transaction(key, payload, self.node.now_ms())
        return self.node.submit(tx)


@pytest.fixture
def harness() -> ChainHarness:
    return ChainHarness()


@pytest.fixture
def manual_harness() -> ChainHarness:
    return ChainHarness(seed="manual", mode=SettlementMode.MANUAL)
