"""User identity: registration, login sessions, and password recovery.

Personal details never reach the ledger in the clear.  They are sealed under
a key derived from the user's password, and that key is additionally wrapped
under a key derived from the three recovery answers, so a forgotten password
can be rotated without losing the details.  Only salts, verifiers, nonces and
ciphertext are stored on-chain.
"""

from __future__ import annotations

import secrets
import time
from dataclasses import dataclass
from random import Random
from typing import Callable

from .codec import Writer, decode_exact
from .crypto import (
    DEFAULT_KDF,
    NONCE_SIZE,
    KdfParams,
    SigningKey,
    decrypt_details,
    derive_key,
    encrypt_details,
    normalize_answer,
    verifier_matches,
)
from .errors import (
    BadPassword,
    InvalidEmail,
    RecoveryFailed,
    SessionExpired,
    SessionUnknown,
    WeakPassword,
)
from .payloads import CredentialRotated, RecoveryEntry, Role, UserRegistered

MIN_PASSWORD_LENGTH = 8
RECOVERY_QUESTION_COUNT = 3
SALT_SIZE = 16


def check_email(email: str) -> None:
    local, sep, domain = email.partition("@")
    if not sep or not local or not domain or "@" in domain:
        raise InvalidEmail(f"not a usable address: {email!r}")


def check_password_strength(password: str) -> None:
    if len(password) < MIN_PASSWORD_LENGTH:
        raise WeakPassword(f"password must be at least {MIN_PASSWORD_LENGTH} characters")


def _encode_details(name: str, email: str, phone: str) -> bytes:
    w = Writer()
    w.text(name).text(email).text(phone)
    return w.getvalue()


def _decode_details(raw: bytes) -> tuple[str, str, str]:
    def read(r):
        return r.text(), r.text(), r.text()

    return decode_exact(raw, read)


def _answers_secret(answers: list[str]) -> str:
    """Combined recovery answers as one KDF input, order-sensitive."""
    w = Writer()
    for answer in answers:
        w.text(normalize_answer(answer))
    return w.getvalue().hex()


class _Entropy:
    """Salt and nonce source; seedable so simulations stay reproducible."""

    def __init__(self, rng: Random | None = None) -> None:
        self._rng = rng

    def take(self, size: int) -> bytes:
        if self._rng is None:
            return secrets.token_bytes(size)
        return self._rng.randbytes(size)


def build_registration(
    name: str,
    email: str,
    phone: str,
    password: str,
    role: Role,
    recovery: list[tuple[str, str]],
    kdf: KdfParams = DEFAULT_KDF,
    rng: Random | None = None,
) -> tuple[SigningKey, UserRegistered]:
    """Fresh keypair plus the registration payload; the key is never stored."""
    check_password_strength(password)
    check_email(email)
    if len(recovery) != RECOVERY_QUESTION_COUNT:
        raise ValueError(f"exactly {RECOVERY_QUESTION_COUNT} recovery questions required")

    entropy = _Entropy(rng)
    key = SigningKey.from_seed(entropy.take(32)) if rng is not None else SigningKey.generate()

    detail_salt = entropy.take(SALT_SIZE)
    detail_key = derive_key(password, detail_salt, kdf)
    encrypted, detail_nonce = encrypt_details(
        _encode_details(name, email, phone), detail_key, entropy.take(NONCE_SIZE)
    )

    auth_salt = entropy.take(SALT_SIZE)
    auth_verifier = derive_key(password, auth_salt, kdf)

    entries = []
    for question, answer in recovery:
        salt = entropy.take(SALT_SIZE)
        entries.append(
            RecoveryEntry(
                question=question,
                salt=salt,
                verifier=derive_key(normalize_answer(answer), salt, kdf),
            )
        )

    wrap_salt = entropy.take(SALT_SIZE)
    wrap_key = derive_key(_answers_secret([a for _, a in recovery]), wrap_salt, kdf)
    wrapped, wrap_nonce = encrypt_details(detail_key, wrap_key, entropy.take(NONCE_SIZE))

    payload = UserRegistered(
        role=role,
        detail_salt=detail_salt,
        detail_nonce=detail_nonce,
        encrypted_details=encrypted,
        auth_salt=auth_salt,
        auth_verifier=auth_verifier,
        kdf=kdf,
        recovery=tuple(entries),
        wrap_salt=wrap_salt,
        wrap_nonce=wrap_nonce,
        wrapped_detail_key=wrapped,
    )
    return key, payload


@dataclass
class UserRecord:
    """Committed identity state for one user; rotation replaces credentials."""

    user_id: bytes
    role: Role
    created_at: int
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

    @classmethod
    def from_registration(cls, user_id: bytes, payload: UserRegistered, created_at: int) -> "UserRecord":
        return cls(
            user_id=user_id,
            role=payload.role,
            created_at=created_at,
            detail_salt=payload.detail_salt,
            detail_nonce=payload.detail_nonce,
            encrypted_details=payload.encrypted_details,
            auth_salt=payload.auth_salt,
            auth_verifier=payload.auth_verifier,
            kdf=payload.kdf,
            recovery=payload.recovery,
            wrap_salt=payload.wrap_salt,
            wrap_nonce=payload.wrap_nonce,
            wrapped_detail_key=payload.wrapped_detail_key,
        )

    def apply_rotation(self, payload: CredentialRotated) -> None:
        """Recovery questions survive rotation; everything keyed does not."""
        self.detail_salt = payload.detail_salt
        self.detail_nonce = payload.detail_nonce
        self.encrypted_details = payload.encrypted_details
        self.auth_salt = payload.auth_salt
        self.auth_verifier = payload.auth_verifier
        self.kdf = payload.kdf
        self.wrap_salt = payload.wrap_salt
        self.wrap_nonce = payload.wrap_nonce
        self.wrapped_detail_key = payload.wrapped_detail_key

    def clone(self) -> "UserRecord":
        return UserRecord(**vars(self))


def password_matches(record: UserRecord, password: str) -> bool:
    return verifier_matches(password, record.auth_salt, record.kdf, record.auth_verifier)


def decrypt_user_details(record: UserRecord, password: str) -> tuple[str, str, str]:
    """(name, email, phone); raises BadPassword on a wrong password."""
    if not password_matches(record, password):
        raise BadPassword("password does not match")
    detail_key = derive_key(password, record.detail_salt, record.kdf)
    return _decode_details(
        decrypt_details(record.encrypted_details, record.detail_nonce, detail_key)
    )


def _recover_detail_key(record: UserRecord, answers: list[str]) -> bytes:
    if len(answers) != len(record.recovery):
        raise RecoveryFailed(f"expected {len(record.recovery)} answers")
    for entry, answer in zip(record.recovery, answers):
        if not verifier_matches(normalize_answer(answer), entry.salt, record.kdf, entry.verifier):
            raise RecoveryFailed("one or more answers do not match")
    wrap_key = derive_key(_answers_secret(answers), record.wrap_salt, record.kdf)
    return decrypt_details(record.wrapped_detail_key, record.wrap_nonce, wrap_key)


def build_rotation(
    record: UserRecord,
    answers: list[str],
    new_password: str,
    rng: Random | None = None,
) -> CredentialRotated:
    """Verified answers let us rekey the details under the new password."""
    check_password_strength(new_password)
    detail_key = _recover_detail_key(record, answers)
    details = decrypt_details(record.encrypted_details, record.detail_nonce, detail_key)

    entropy = _Entropy(rng)
    new_detail_salt = entropy.take(SALT_SIZE)
    new_detail_key = derive_key(new_password, new_detail_salt, record.kdf)
    encrypted, detail_nonce = encrypt_details(details, new_detail_key, entropy.take(NONCE_SIZE))

    auth_salt = entropy.take(SALT_SIZE)
    auth_verifier = derive_key(new_password, auth_salt, record.kdf)

    wrap_salt = entropy.take(SALT_SIZE)
    wrap_key = derive_key(_answers_secret(answers), wrap_salt, record.kdf)
    wrapped, wrap_nonce = encrypt_details(new_detail_key, wrap_key, entropy.take(NONCE_SIZE))

    return CredentialRotated(
        user_id=record.user_id,
        detail_salt=new_detail_salt,
        detail_nonce=detail_nonce,
        encrypted_details=encrypted,
        auth_salt=auth_salt,
        auth_verifier=auth_verifier,
        kdf=record.kdf,
        wrap_salt=wrap_salt,
        wrap_nonce=wrap_nonce,
        wrapped_detail_key=wrapped,
    )


# -- sessions --------------------------------------------------------------

DEFAULT_SESSION_TTL = 3600


@dataclass(frozen=True)
class Session:
    token: str
    user_id: bytes
    issued_at: float
    expires_at: float


class SessionStore:
    """Opaque bearer tokens with a fixed TTL; node-local, never on-chain."""

    def __init__(self, ttl_seconds: float = DEFAULT_SESSION_TTL, clock: Callable[[], float] = time.time) -> None:
        if ttl_seconds <= 0:
            raise ValueError("ttl_seconds must be positive")
        self.ttl_seconds = ttl_seconds
        self._clock = clock
        self._sessions: dict[str, Session] = {}

    def issue(self, user_id: bytes) -> Session:
        now = self._clock()
        session = Session(
            token=secrets.token_urlsafe(32),
            user_id=user_id,
            issued_at=now,
            expires_at=now + self.ttl_seconds,
        )
        self._sessions[session.token] = session
        return session

    def validate(self, token: str) -> Session:
        session = self._sessions.get(token)
        if session is None:
            raise SessionUnknown("no such session")
        if self._clock() >= session.expires_at:
            del self._sessions[session.token]
            raise SessionExpired("session expired")
        return session

    def revoke(self, token: str) -> None:
        self._sessions.pop(token, None)
