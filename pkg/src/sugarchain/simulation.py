"""Deterministic multi-node network harness for the replication layer.

Time is integer ticks.  Proposals happen only at boundary ticks (every
block_interval_ticks), and a transaction enters a proposal only once its
timestamp is at least latency_max ticks old, by which point every node has
received it in a fault-free run.  Block grouping therefore depends on the
workload alone, which is what makes the multi-node run comparable to the
single-chain sequential oracle digest for digest.

All randomness comes from named substreams of the configured seed, so a
config plus a workload replays byte for byte.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from random import Random

from . import identity
from .consensus import Mempool, ValidatorSet, expected_proposer, propose_block, validate_proposal
from .crypto import FAST_KDF, SigningKey, hash_canonical
from .errors import ConfigInvalid, EmptyMempoolPolicy
from .ledger import (
    Block,
    Chain,
    SignedTransaction,
    _block_header,
    append_block,
    build_transaction,
    decode_block,
    decode_transaction,
    make_genesis,
)
from .payloads import (
    DeliveryConfirmed,
    LotRegistered,
    PaymentSettled,
    QualityReport,
    QualityUpdate,
    Role,
    Transfer,
)
from .state import ChainState
from .supplychain import SettlementMode, SettlementRule

REPORT_HEADER = "sugarchain-sim-report v1"

TX_GOSSIP = "TxGossip"
BLOCK_PROPOSAL = "BlockProposal"
BLOCK_VOTE_ACK = "BlockVoteAck"

BYZANTINE_TAMPER = "tamper_txroot"
BYZANTINE_SILENT = "silent"


# -- configuration ---------------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    node_count: int = 4
    byzantine_nodes: frozenset[int] = frozenset()
    byzantine_mode: str = BYZANTINE_TAMPER
    latency_min: int = 1
    latency_max: int = 2
    drop_probability: float = 0.0
    rng_seed: int = 42
    block_interval_ticks: int = 5
    allow_empty: bool = False
    settlement_mode: SettlementMode = SettlementMode.AUTO
    max_ticks: int = 10_000
    chain_id: str = "sim"

    def validate(self) -> None:
        if self.node_count < 1:
            raise ConfigInvalid("node_count must be >= 1")
        if not self.byzantine_nodes <= set(range(self.node_count)):
            raise ConfigInvalid("byzantine_nodes must be existing node ids")
        if self.byzantine_mode not in (BYZANTINE_TAMPER, BYZANTINE_SILENT):
            raise ConfigInvalid(f"unknown byzantine_mode {self.byzantine_mode!r}")
        if self.latency_min < 1 or self.latency_max < self.latency_min:
            raise ConfigInvalid("need 1 <= latency_min <= latency_max")
        if not 0.0 <= self.drop_probability < 1.0:
            raise ConfigInvalid("drop_probability must be in [0, 1)")
        if self.block_interval_ticks <= self.latency_max:
            raise ConfigInvalid("block_interval_ticks must exceed latency_max")
        if self.max_ticks < self.block_interval_ticks:
            raise ConfigInvalid("max_ticks too small for even one proposal boundary")


_CONFIG_KEYS = {
    "node_count": int,
    "byzantine_nodes": str,
    "byzantine_mode": str,
    "latency_min": int,
    "latency_max": int,
    "drop_probability": float,
    "rng_seed": int,
    "block_interval_ticks": int,
    "allow_empty": str,
    "settlement_mode": str,
    "max_ticks": int,
    "chain_id": str,
}


def parse_config(text: str) -> SimConfig:
    """key=value lines; # starts a comment; unknown keys are refused."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigInvalid(f"line {lineno}: expected key=value, got {raw!r}")
        if key not in _CONFIG_KEYS:
            raise ConfigInvalid(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_config_value(key, value)
        except ValueError as exc:
            raise ConfigInvalid(f"line {lineno}: {exc}") from None
    config = SimConfig(**values)  # type: ignore[arg-type]
    config.validate()
    return config


def _parse_config_value(key: str, value: str) -> object:
    kind = _CONFIG_KEYS[key]
    if key == "byzantine_nodes":
        if not value:
            return frozenset()
        return frozenset(int(part) for part in value.split(","))
    if key == "allow_empty":
        if value not in ("true", "false"):
            raise ValueError("allow_empty must be true or false")
        return value == "true"
    if key == "settlement_mode":
        return SettlementMode(value)
    return kind(value)


# -- workload scripts ------------------------------------------------------

@dataclass(frozen=True)
class Submission:
    tick: int
    node: int
    tx: SignedTransaction
    line: int


class _WorkloadBuilder:
    """Turns script lines into fully signed transactions ahead of the run.

    Timestamps are submission ticks, keys come from per-name substreams, and
    aliases let later lines reference earlier transactions by id, so the
    whole batch is deterministic before a single tick executes.
    """

    def __init__(self, config: SimConfig) -> None:
        self.config = config
        self.users: dict[str, tuple[SigningKey, Role]] = {}
        self.aliases: dict[str, bytes] = {}
        self.submissions: list[Submission] = []

    def build(self, text: str) -> list[Submission]:
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                self._line(line, lineno)
            except ConfigInvalid:
                raise
            except Exception as exc:
                raise ConfigInvalid(f"workload line {lineno}: {exc}") from None
        return sorted(self.submissions, key=lambda s: (s.tick, s.line))

    def _line(self, line: str, lineno: int) -> None:
        head, *rest = line.split()
        if not head.startswith("@"):
            raise ConfigInvalid(f"workload line must start with @tick: {line!r}")
        tick = int(head[1:])
        if tick < 1:
            raise ConfigInvalid("submission ticks start at 1")
        if not rest:
            raise ConfigInvalid("missing verb")
        args = dict(part.split("=", 1) for part in rest[1:])
        node = int(args.pop("node", "0"))
        if not 0 <= node < self.config.node_count:
            raise ConfigInvalid(f"node {node} out of range")
        alias = args.pop("alias", None)
        verb = rest[0]
        builder = getattr(self, f"_verb_{verb}", None)
        if builder is None:
            raise ConfigInvalid(f"unknown verb {verb!r}")
        tx = builder(tick, args)
        if args:
            raise ConfigInvalid(f"unused arguments {sorted(args)}")
        if alias is not None:
            if alias in self.aliases:
                raise ConfigInvalid(f"duplicate alias {alias!r}")
            self.aliases[alias] = tx.tx_id
        self.submissions.append(Submission(tick, node, tx, lineno))

    def _key_of(self, name: str) -> SigningKey:
        if name not in self.users:
            raise ConfigInvalid(f"unknown user {name!r}")
        return self.users[name][0]

    def _ref(self, args: dict[str, str], key: str) -> bytes:
        alias = args.pop(key)
        if alias not in self.aliases:
            raise ConfigInvalid(f"unknown alias {alias!r}")
        return self.aliases[alias]

    def _verb_register(self, tick: int, args: dict[str, str]) -> SignedTransaction:
        name = args.pop("name")
        role = Role.from_name(args.pop("role"))
        if name in self.users:
            raise ConfigInvalid(f"duplicate user {name!r}")
        rng = Random(f"{self.config.rng_seed}/user/{name}")
        key, payload = identity.build_registration(
            name=name.title(),
            email=f"{name}@sim.local",
            phone=f"+91-90000{len(self.users):05d}",
            password=f"pw-{name}-sim1",
            role=role,
            recovery=[(f"question {i}", f"{name}-answer-{i}") for i in range(1, 4)],
            kdf=FAST_KDF,
            rng=rng,
        )
        self.users[name] = (key, role)
        return build_transaction(key, payload, tick)

    def _verb_lot(self, tick: int, args: dict[str, str]) -> SignedTransaction:
        farmer = self._key_of(args.pop("farmer"))
        payload = LotRegistered(
            quantity_kg=int(args.pop("qty")),
            farm_location=args.pop("location", "unspecified"),
            price_paise_per_kg=int(args.pop("price")),
            seed_supplier_ref=args.pop("seed_ref", None),
        )
        return build_transaction(farmer, payload, tick)

    def _verb_quality(self, tick: int, args: dict[str, str]) -> SignedTransaction:
        submitter = self._key_of(args.pop("by"))
        payload = QualityUpdate(
            lot_id=self._ref(args, "lot"),
            quality=QualityReport(
                grade=args.pop("grade"),
                moisture_tenths_pct=int(round(float(args.pop("moisture")) * 10)),
                affected_by_worms=args.pop("worms", "no") == "yes",
            ),
            mill_info=args.pop("mill_info", None),
        )
        return build_transaction(submitter, payload, tick)

    def _verb_transfer(self, tick: int, args: dict[str, str]) -> SignedTransaction:
        sender = args.pop("from")
        receiver = args.pop("to")
        payload = Transfer(
            lot_id=self._ref(args, "lot"),
            actor_from=self._key_of(sender).public_bytes,
            actor_to=self._key_of(receiver).public_bytes,
            price_paise_per_kg=int(args.pop("price")),
        )
        return build_transaction(self._key_of(sender), payload, tick)

    def _verb_deliver(self, tick: int, args: dict[str, str]) -> SignedTransaction:
        receiver = self._key_of(args.pop("by"))
        payload = DeliveryConfirmed(
            lot_id=self._ref(args, "lot"),
            transfer_tx_id=self._ref(args, "transfer"),
        )
        return build_transaction(receiver, payload, tick)

    def _verb_settle(self, tick: int, args: dict[str, str]) -> SignedTransaction:
        payer = args.pop("payer")
        payload = PaymentSettled(
            lot_id=self._ref(args, "lot"),
            delivery_tx_id=self._ref(args, "delivery"),
            payer=self._key_of(payer).public_bytes,
            payee=self._key_of(args.pop("payee")).public_bytes,
            amount_paise=int(args.pop("amount")),
        )
        return build_transaction(self._key_of(payer), payload, tick)


def parse_workload(config: SimConfig, text: str) -> list[Submission]:
    return _WorkloadBuilder(config).build(text)


# -- the network -----------------------------------------------------------

@dataclass(frozen=True)
class NetworkMessage:
    kind: str
    sender: int
    receiver: int
    payload: bytes
    deliver_at: int


class SimNode:
    """One validator: a chain, a state fold, a mempool, a commit clock.

    The proposer offset is not a local counter: it is the number of proposal
    boundaries that have passed since this node's last commit.  Honest nodes
    commit each height within the same inter-boundary window (latency_max is
    below the interval), so they always compute the same offset, even when
    gossip drops leave their mempools disagreeing.
    """

    def __init__(self, node_id: int, key: SigningKey, chain: Chain, rule: SettlementRule) -> None:
        self.node_id = node_id
        self.key = key
        self.chain = chain
        self.state = ChainState.from_chain(chain, rule)
        self.mempool = Mempool()
        self.last_commit_tick = 0

    @property
    def height(self) -> int:
        return self.chain.height

    def skip_at(self, boundary: int, interval: int) -> int:
        """Boundaries elapsed since the first one after the last commit."""
        first_after = (self.last_commit_tick // interval + 1) * interval
        return max(0, (boundary - first_after) // interval)

    def matured(self, tick: int, latency_max: int) -> list[SignedTransaction]:
        ready = self.mempool.matured(tick - latency_max)
        return [tx for tx in ready if not self.chain.has_tx(tx.tx_id)]

    def has_work(self, tick: int, latency_max: int) -> bool:
        return bool(self.matured(tick, latency_max)) or bool(self.state.pending_settlements())

    def backlog(self) -> bool:
        """Anything uncommitted at all, matured or not."""
        pending = [tx for tx in self.mempool.matured() if not self.chain.has_tx(tx.tx_id)]
        return bool(pending) or bool(self.state.pending_settlements())

    def commit(self, block: Block, tick: int) -> None:
        append_block(self.chain, block)
        self.state.apply_block(block)
        for tx in block.transactions:
            self.mempool.remove(tx.tx_id)
        self.last_commit_tick = tick


@dataclass
class RejectionLog:
    block_hash: bytes
    height: int
    reason: str
    nodes: int


@dataclass
class SimReport:
    config: SimConfig
    final_tick: int
    quiescent: bool
    tips: list[tuple[int, str, int]]
    delivered: dict[str, int]
    dropped: dict[str, int]
    rejections: list[RejectionLog]
    fork_heights: list[int]

    def render(self) -> str:
        c = self.config
        byz = ",".join(str(n) for n in sorted(c.byzantine_nodes)) or "-"
        lines = [
            REPORT_HEADER,
            f"config nodes={c.node_count} byzantine={byz} byzantine_mode={c.byzantine_mode}"
            f" latency={c.latency_min}..{c.latency_max} drop={c.drop_probability}"
            f" interval={c.block_interval_ticks} seed={c.rng_seed}"
            f" settlement={c.settlement_mode.value}",
            f"ticks {self.final_tick} quiescent {'yes' if self.quiescent else 'no'}",
        ]
        for node_id, digest, height in self.tips:
            lines.append(f"node {node_id} tip {digest} height {height}")
        delivered = " ".join(f"{k}={self.delivered.get(k, 0)}" for k in (TX_GOSSIP, BLOCK_PROPOSAL, BLOCK_VOTE_ACK))
        lines.append(f"delivered {delivered}")
        lines.append(f"dropped {TX_GOSSIP}={self.dropped.get(TX_GOSSIP, 0)}")
        lines.append(f"rejected {len(self.rejections)}")
        for rej in self.rejections:
            lines.append(
                f"  proposal {rej.block_hash.hex()[:16]} height {rej.height}"
                f" nodes={rej.nodes} reason={rej.reason}"
            )
        lines.append(f"forks {len(self.fork_heights)}")
        return "\n".join(lines) + "\n"


def validator_keys(config: SimConfig) -> list[SigningKey]:
    rng = Random(f"{config.rng_seed}/validators")
    return [SigningKey.from_seed(rng.randbytes(32)) for _ in range(config.node_count)]


def _tampered_copy(block: Block, key: SigningKey) -> Block:
    """Valid signature over a corrupted tx_root; honest nodes must refuse it."""
    bad_root = bytes(block.tx_root[:-1]) + bytes([block.tx_root[-1] ^ 0x01])
    header = _block_header(
        block.height, block.prev_hash, bad_root, block.proposer, block.timestamp, block.extension
    )
    return Block(
        height=block.height,
        prev_hash=block.prev_hash,
        tx_root=bad_root,
        proposer=block.proposer,
        timestamp=block.timestamp,
        extension=block.extension,
        proposer_signature=key.sign(header),
        transactions=block.transactions,
        block_hash=hash_canonical(header),
    )


class _Network:
    """Message queue with seeded latency and TxGossip-only drops."""

    def __init__(self, config: SimConfig) -> None:
        self.config = config
        self.rng = Random(f"{config.rng_seed}/net")
        self.queue: list[tuple[int, int, NetworkMessage]] = []
        self.seq = 0
        self.delivered: dict[str, int] = {}
        self.dropped: dict[str, int] = {}

    def send(self, kind: str, sender: int, receiver: int, payload: bytes, now: int) -> None:
        latency = self.rng.randint(self.config.latency_min, self.config.latency_max)
        if kind == TX_GOSSIP and self.rng.random() < self.config.drop_probability:
            self.dropped[kind] = self.dropped.get(kind, 0) + 1
            return
        message = NetworkMessage(kind, sender, receiver, payload, now + latency)
        self.seq += 1
        heapq.heappush(self.queue, (message.deliver_at, self.seq, message))

    def due(self, tick: int) -> list[NetworkMessage]:
        batch = []
        while self.queue and self.queue[0][0] <= tick:
            batch.append(heapq.heappop(self.queue)[2])
        return batch

    def record_delivery(self, kind: str) -> None:
        self.delivered[kind] = self.delivered.get(kind, 0) + 1


def run_simulation(config: SimConfig, workload: list[Submission]) -> SimReport:
    """Tick loop: deliver, inject, then propose at block boundaries."""
    config.validate()
    keys = validator_keys(config)
    genesis = make_genesis([k.user_id for k in keys], chain_id=config.chain_id)
    rule = SettlementRule(mode=config.settlement_mode)
    nodes = [
        SimNode(i, keys[i], Chain.from_genesis(genesis), rule) for i in range(config.node_count)
    ]
    validator_set = ValidatorSet(tuple(k.user_id for k in keys))
    net = _Network(config)
    honest = [n for n in nodes if n.node_id not in config.byzantine_nodes]
    silent = config.byzantine_mode == BYZANTINE_SILENT
    rejections: dict[bytes, RejectionLog] = {}
    pending = list(workload)
    last_submission = max((s.tick for s in pending), default=0)

    def deliver(node: SimNode, message: NetworkMessage, now: int) -> None:
        if message.kind == TX_GOSSIP:
            tx = decode_transaction(message.payload)
            if not node.chain.has_tx(tx.tx_id):
                node.mempool.add(tx)
        elif message.kind == BLOCK_PROPOSAL:
            block = decode_block(message.payload)
            boundary = (now // config.block_interval_ticks) * config.block_interval_ticks
            slack = node.skip_at(boundary, config.block_interval_ticks) + 1
            verdict = validate_proposal(node.chain, node.state, block, slack)
            if verdict.accepted:
                node.commit(block, now)
                net.send(BLOCK_VOTE_ACK, node.node_id, message.sender, block.block_hash, now)
            else:
                log = rejections.get(block.block_hash)
                if log is None:
                    rejections[block.block_hash] = RejectionLog(
                        block.block_hash, block.height, verdict.reason or "?", 1
                    )
                else:
                    log.nodes += 1

    tick = 0
    quiescent = False
    while tick < config.max_ticks:
        tick += 1

        for message in net.due(tick):
            net.record_delivery(message.kind)
            node = nodes[message.receiver]
            if node.node_id in config.byzantine_nodes and silent:
                continue
            deliver(node, message, tick)

        while pending and pending[0].tick == tick:
            submission = pending.pop(0)
            node = nodes[submission.node]
            node.mempool.add(submission.tx)
            if not (node.node_id in config.byzantine_nodes and silent):
                for other in nodes:
                    if other.node_id != node.node_id:
                        net.send(
                            TX_GOSSIP, node.node_id, other.node_id, submission.tx.encode(), tick
                        )

        if tick % config.block_interval_ticks == 0:
            for node in nodes:
                byzantine = node.node_id in config.byzantine_nodes
                if byzantine and silent:
                    continue
                offset = node.skip_at(tick, config.block_interval_ticks)
                slot = expected_proposer(validator_set, node.height + 1, offset)
                work = node.has_work(tick, config.latency_max)
                if slot != node.key.user_id or not (work or config.allow_empty):
                    continue
                try:
                    block, _audit = propose_block(
                        node.chain,
                        node.state,
                        node.matured(tick, config.latency_max),
                        node.key,
                        tick,
                        offset=offset,
                        allow_empty=config.allow_empty,
                    )
                except EmptyMempoolPolicy:
                    continue
                if byzantine:
                    block = _tampered_copy(block, node.key)
                else:
                    node.commit(block, tick)
                for other in nodes:
                    if other.node_id != node.node_id:
                        net.send(
                            BLOCK_PROPOSAL, node.node_id, other.node_id, block.encode(), tick
                        )

        if not net.queue and not pending and tick >= last_submission:
            if not any(n.backlog() for n in honest):
                quiescent = True
                break

    fork_heights = _fork_heights(honest)
    tips = [
        (n.node_id, n.chain.tip.block_hash.hex(), n.height)
        for n in nodes
    ]
    return SimReport(
        config=config,
        final_tick=tick,
        quiescent=quiescent,
        tips=tips,
        delivered=net.delivered,
        dropped=net.dropped,
        rejections=sorted(rejections.values(), key=lambda r: (r.height, r.block_hash)),
        fork_heights=fork_heights,
    )


def _fork_heights(nodes: list[SimNode]) -> list[int]:
    heights: list[int] = []
    if not nodes:
        return heights
    depth = min(n.height for n in nodes)
    for h in range(1, depth + 1):
        hashes = {n.chain.blocks[h].block_hash for n in nodes}
        if len(hashes) > 1:
            heights.append(h)
    return heights


def run_sequential(config: SimConfig, workload: list[Submission]) -> tuple[Chain, ChainState]:
    """Single-chain oracle: same keys, same boundaries, same maturity rule.

    Fault-free multi-node runs must land on exactly this tip.
    """
    config.validate()
    keys = validator_keys(config)
    genesis = make_genesis([k.user_id for k in keys], chain_id=config.chain_id)
    chain = Chain.from_genesis(genesis)
    state = ChainState.from_chain(chain, SettlementRule(mode=config.settlement_mode))
    validator_set = ValidatorSet(tuple(k.user_id for k in keys))
    by_key = {k.user_id: k for k in keys}
    mempool = Mempool()
    pending = list(workload)
    last_submission = max((s.tick for s in pending), default=0)
    interval = config.block_interval_ticks
    last_commit_tick = 0

    tick = 0
    while tick < config.max_ticks:
        tick += 1
        while pending and pending[0].tick == tick:
            mempool.add(pending.pop(0).tx)

        if tick % interval == 0:
            matured = [
                tx
                for tx in mempool.matured(tick - config.latency_max)
                if not chain.has_tx(tx.tx_id)
            ]
            if matured or state.pending_settlements() or config.allow_empty:
                first_after = (last_commit_tick // interval + 1) * interval
                offset = max(0, (tick - first_after) // interval)
                proposer = by_key[expected_proposer(validator_set, chain.height + 1, offset)]
                try:
                    block, _ = propose_block(
                        chain, state, matured, proposer, tick,
                        offset=offset, allow_empty=config.allow_empty,
                    )
                except EmptyMempoolPolicy:
                    block = None
                if block is not None:
                    append_block(chain, block)
                    state.apply_block(block)
                    for tx in block.transactions:
                        mempool.remove(tx.tx_id)
                    last_commit_tick = tick

        backlog = [tx for tx in mempool.matured() if not chain.has_tx(tx.tx_id)]
        if not pending and tick >= last_submission and not backlog and not state.pending_settlements():
            break

    return chain, state
