"""Cryptographic primitives used project-wide.

One digest (SHA-256) is used for block hashes, transaction ids and the tx
root, so any two nodes agree bit-exactly.  Identities are Ed25519 keypairs:
the 32-byte public key is the userID.  Personal details are sealed with
AES-256-GCM under a fresh 24-byte nonce, and passwords never leave the KDF:
only salted scrypt verifiers are stored.
"""

from __future__ import annotations

import hashlib
import hmac
import os
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import DecodeError, DecryptAuthFailure

DIGEST_SIZE = 32
USER_ID_SIZE = 32
SIGNATURE_SIZE = 64
NONCE_SIZE = 24
DETAIL_KEY_SIZE = 32
ZERO_DIGEST = b"\x00" * DIGEST_SIZE


def hash_canonical(payload: bytes) -> bytes:
    """Digest of a canonical byte encoding; total and deterministic."""
    return hashlib.sha256(payload).digest()


def digest_hex(digest: bytes) -> str:
    return digest.hex()


def digest_from_hex(text: str) -> bytes:
    try:
        raw = bytes.fromhex(text)
    except ValueError:
        raise DecodeError(f"not a hex digest: {text!r}") from None
    if len(raw) != DIGEST_SIZE:
        raise DecodeError(f"digest must be {DIGEST_SIZE} bytes, got {len(raw)}")
    return raw


# -- signing keys ----------------------------------------------------------

class SigningKey:
    """Ed25519 private key; the public half doubles as the userID."""

    def __init__(self, key: Ed25519PrivateKey) -> None:
        self._key = key
        self.public_bytes = key.public_key().public_bytes_raw()

    @classmethod
    def generate(cls) -> "SigningKey":
        return cls(Ed25519PrivateKey.generate())

    @classmethod
    def from_seed(cls, seed: bytes) -> "SigningKey":
        if len(seed) != 32:
            raise ValueError("seed must be 32 bytes")
        return cls(Ed25519PrivateKey.from_private_bytes(seed))

    def seed_bytes(self) -> bytes:
        return self._key.private_bytes_raw()

    @property
    def user_id(self) -> str:
        return self.public_bytes.hex()

    def sign(self, message: bytes) -> bytes:
        return self._key.sign(message)


def verify_signature(public_key: bytes, signature: bytes, message: bytes) -> bool:
    if len(public_key) != USER_ID_SIZE:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


# -- authenticated encryption ---------------------------------------------

def encrypt_details(plaintext: bytes, key: bytes, nonce: bytes | None = None) -> tuple[bytes, bytes]:
    """Seal plaintext; returns (ciphertext, nonce) with a fresh nonce per call."""
    if nonce is None:
        nonce = os.urandom(NONCE_SIZE)
    if len(nonce) != NONCE_SIZE:
        raise ValueError(f"nonce must be {NONCE_SIZE} bytes")
    return AESGCM(key).encrypt(nonce, plaintext, None), nonce


def decrypt_details(ciphertext: bytes, nonce: bytes, key: bytes) -> bytes:
    try:
        return AESGCM(key).decrypt(nonce, ciphertext, None)
    except Exception:
        raise DecryptAuthFailure("ciphertext failed authentication") from None


# -- password derivation ---------------------------------------------------

@dataclass(frozen=True)
class KdfParams:
    """scrypt cost parameters; stored alongside each verifier."""

    n: int = 16384
    r: int = 8
    p: int = 1
    dklen: int = 32


# Cheap profile for tests and simulations; still salted, just low-cost.
FAST_KDF = KdfParams(n=256)
DEFAULT_KDF = KdfParams()


def derive_key(secret: str, salt: bytes, params: KdfParams = DEFAULT_KDF) -> bytes:
    return hashlib.scrypt(
        secret.encode("utf-8"),
        salt=salt,
        n=params.n,
        r=params.r,
        p=params.p,
        dklen=params.dklen,
        maxmem=128 * 1024 * 1024,
    )


def verifier_matches(secret: str, salt: bytes, params: KdfParams, expected: bytes) -> bool:
    return hmac.compare_digest(derive_key(secret, salt, params), expected)


def normalize_answer(answer: str) -> str:
    """Recovery answers compare case-insensitively with surrounding space ignored."""
    return answer.strip().lower()
