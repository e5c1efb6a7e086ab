"""The deployable node: config, key custody, commit pipeline, persistence.

One process owns one data_dir and one chain.  Every mutation funnels through
a single commit lock; a submitted transaction gets its own block, and any
settlement it makes due lands in an immediate follow-up block, which is what
keeps the delivery-to-payment gap at one block.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from random import Random

from . import errors, identity
from .consensus import propose_block
from .crypto import DEFAULT_KDF, FAST_KDF, KdfParams, SigningKey
from .errors import (
    BadPassword,
    BadTransaction,
    ConfigInvalid,
    CorruptStore,
    SugarChainError,
    UnknownUser,
)
from .ledger import (
    Block,
    Chain,
    SignedTransaction,
    append_block,
    build_transaction,
    check_transaction,
    make_genesis,
    verify_chain,
)
from .payloads import Role
from .state import ChainState
from .store import BlockStore
from .supplychain import SettlementMode, SettlementRule

VALIDATOR_KEY_FILENAME = "validator.key"


@dataclass(frozen=True)
class NodeConfig:
    data_dir: Path = Path("sugarchain-data")
    listen_address: str = "127.0.0.1:8730"
    chain_id: str = "sugarchain-main"
    validator_key: Path | None = None
    session_ttl_minutes: int = 60
    settlement: SettlementRule = field(default_factory=SettlementRule)
    kdf_profile: str = "default"
    survey_csv: Path | None = None
    static_dir: Path | None = None

    def validate(self) -> None:
        if self.session_ttl_minutes < 1:
            raise ConfigInvalid("session_ttl_minutes must be >= 1")
        host, sep, port = self.listen_address.rpartition(":")
        if not sep or not host or not port.isdigit():
            raise ConfigInvalid(f"listen_address must be host:port, got {self.listen_address!r}")
        if self.kdf_profile not in ("default", "fast"):
            raise ConfigInvalid("kdf_profile must be default or fast")

    @property
    def host(self) -> str:
        return self.listen_address.rpartition(":")[0]

    @property
    def port(self) -> int:
        return int(self.listen_address.rpartition(":")[2])

    @property
    def kdf(self) -> KdfParams:
        return FAST_KDF if self.kdf_profile == "fast" else DEFAULT_KDF

    @property
    def validator_key_path(self) -> Path:
        return self.validator_key or self.data_dir / VALIDATOR_KEY_FILENAME


_CONFIG_KEYS = (
    "data_dir",
    "listen_address",
    "chain_id",
    "validator_key",
    "session_ttl_minutes",
    "settlement_mode",
    "max_block_lag",
    "kdf_profile",
    "survey_csv",
    "static_dir",
)


def parse_node_config(text: str, base: NodeConfig | None = None) -> NodeConfig:
    """key=value lines layered over `base`; # starts a comment."""
    config = base or NodeConfig()
    settlement = config.settlement
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in _CONFIG_KEYS:
            raise ConfigInvalid(f"line {lineno}: expected a known key=value, got {raw!r}")
        try:
            if key == "data_dir":
                config = replace(config, data_dir=Path(value))
            elif key == "listen_address":
                config = replace(config, listen_address=value)
            elif key == "chain_id":
                config = replace(config, chain_id=value)
            elif key == "validator_key":
                config = replace(config, validator_key=Path(value))
            elif key == "session_ttl_minutes":
                config = replace(config, session_ttl_minutes=int(value))
            elif key == "settlement_mode":
                settlement = replace(settlement, mode=SettlementMode(value))
            elif key == "max_block_lag":
                settlement = replace(settlement, max_block_lag=int(value))
            elif key == "kdf_profile":
                config = replace(config, kdf_profile=value)
            elif key == "survey_csv":
                config = replace(config, survey_csv=Path(value))
            elif key == "static_dir":
                config = replace(config, static_dir=Path(value))
        except (ValueError, SugarChainError) as exc:
            raise ConfigInvalid(f"line {lineno}: {exc}") from None
    config = replace(config, settlement=settlement)
    config.validate()
    return config


def load_node_config(path: str | Path | None, base: NodeConfig | None = None) -> NodeConfig:
    if path is None:
        config = base or NodeConfig()
        config.validate()
        return config
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from None
    return parse_node_config(text, base)


def _save_key(path: Path, key: SigningKey) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(key.seed_bytes().hex() + "\n", encoding="utf-8")
    path.chmod(0o600)


def load_key(path: str | Path) -> SigningKey:
    return SigningKey.from_seed(bytes.fromhex(Path(path).read_text(encoding="utf-8").strip()))


def init_node(config: NodeConfig, rng: Random | None = None) -> Chain:
    """Create the data_dir: a validator key and a genesis-only block file."""
    config.validate()
    store = BlockStore(config.data_dir)
    if store.exists():
        raise ConfigInvalid(f"{store.path} already exists; refusing to reinitialize")
    key_path = config.validator_key_path
    if key_path.exists():
        key = load_key(key_path)
    else:
        key = SigningKey.from_seed(rng.randbytes(32)) if rng else SigningKey.generate()
        _save_key(key_path, key)
    genesis = make_genesis([key.user_id], chain_id=config.chain_id)
    store.rewrite([genesis])
    return Chain.from_genesis(genesis)


class SugarNode:
    """A loaded chain plus everything the API and CLI need to drive it."""

    def __init__(self, config: NodeConfig, clock=time.time) -> None:
        config.validate()
        self.config = config
        self.clock = clock
        self.store = BlockStore(config.data_dir)
        if not self.store.exists():
            raise CorruptStore(f"no block store at {self.store.path}; run init first")
        blocks = self.store.load()
        self.load_warning = self.store.warning
        if not blocks:
            raise CorruptStore(f"{self.store.path} holds no blocks, not even genesis")
        chain = Chain.from_genesis(blocks[0])
        try:
            for block in blocks[1:]:
                append_block(chain, block)
        except SugarChainError as exc:
            raise CorruptStore(f"block file fails verification: {exc}") from None
        report = verify_chain(chain)
        if not report.ok:
            raise CorruptStore(f"chain fails verification: {report.describe()}")
        self.chain = chain
        self.state = ChainState.from_chain(chain, config.settlement)
        self.sessions = identity.SessionStore(config.session_ttl_minutes * 60, clock=clock)
        self.validator = (
            load_key(config.validator_key_path) if config.validator_key_path.exists() else None
        )
        self._commit_lock = threading.Lock()
        if self.validator is not None and self.state.pending_settlements():
            # a crash between a delivery block and its settlement block heals here
            with self._commit_lock:
                self._settle_due()

    # -- commit pipeline ---------------------------------------------------

    def now_ms(self) -> int:
        return int(self.clock() * 1000)

    def _require_validator(self) -> SigningKey:
        if self.validator is None:
            raise ConfigInvalid("this node has no validator key; it cannot commit blocks")
        return self.validator

    def _commit(self, txs: list[SignedTransaction]) -> Block:
        """Build, validate, append, persist one block; lock held by caller."""
        key = self._require_validator()
        block, audit = propose_block(
            self.chain, self.state, txs, key, self.now_ms(), allow_empty=False
        )
        if audit:
            # submit() validates first, so an exclusion here is a logic error
            raise BadTransaction("; ".join(str(entry) for entry in audit))
        append_block(self.chain, block)
        self.state.apply_block(block)
        self.store.append(block)
        return block

    def _settle_due(self) -> list[Block]:
        blocks = []
        while self.state.pending_settlements():
            blocks.append(self._commit([]))
        return blocks

    def submit(self, tx: SignedTransaction) -> tuple[Block, list[Block]]:
        """Commit a signed transaction in its own block, then settle what fell due."""
        check_transaction(tx)
        with self._commit_lock:
            if self.chain.has_tx(tx.tx_id):
                raise BadTransaction(f"{tx.tx_id_hex[:16]} is already committed")
            violation = self.state.validate_tx(tx)
            if violation is not None:
                # surface the violation under its own code so callers can map it
                cls = getattr(errors, violation.code, BadTransaction)
                if not (isinstance(cls, type) and issubclass(cls, SugarChainError)):
                    cls = BadTransaction
                raise cls(violation.message)
            block = self._commit([tx])
            return block, self._settle_due()

    # -- identity flows ----------------------------------------------------

    def register_user(
        self,
        name: str,
        email: str,
        phone: str,
        password: str,
        role: Role,
        recovery: list[tuple[str, str]],
        rng: Random | None = None,
    ) -> tuple[SigningKey, SignedTransaction]:
        """The private key is returned to the caller and never stored here."""
        key, payload = identity.build_registration(
            name, email, phone, password, role, recovery, kdf=self.config.kdf, rng=rng
        )
        tx = build_transaction(key, payload, self.now_ms())
        self.submit(tx)
        return key, tx

    def _user_record(self, user_id: str) -> identity.UserRecord:
        try:
            record = self.state.users.get(bytes.fromhex(user_id))
        except ValueError:
            record = None
        if record is None:
            raise UnknownUser(f"no user {user_id[:16]}")
        return record

    def login(self, user_id: str, password: str) -> identity.Session:
        record = self._user_record(user_id)
        if not identity.password_matches(record, password):
            raise BadPassword("wrong password; recovery is available")
        return self.sessions.issue(record.user_id)

    def recover(
        self, user_id: str, answers: list[str], new_password: str, rng: Random | None = None
    ) -> identity.Session:
        record = self._user_record(user_id)
        payload = identity.build_rotation(record, answers, new_password, rng=rng)
        tx = build_transaction(self._require_validator(), payload, self.now_ms())
        self.submit(tx)
        return self.sessions.issue(record.user_id)
