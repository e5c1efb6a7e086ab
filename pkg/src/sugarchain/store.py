"""Append-only block persistence: one base64 record per line.

A crash can only tear the final line, so a bad tail is truncated with a
warning and the verified prefix survives.  Damage anywhere earlier is not
recoverable bookkeeping, it is tampering or rot, and loading refuses.
"""

from __future__ import annotations

import base64
import binascii
import os
from pathlib import Path

from .errors import CorruptStore, DecodeError
from .ledger import Block, decode_block

BLOCKS_FILENAME = "blocks.log"


class BlockStore:
    """Owns the block file; the caller owns ordering and validation."""

    def __init__(self, data_dir: str | Path) -> None:
        self.data_dir = Path(data_dir)
        self.path = self.data_dir / BLOCKS_FILENAME
        self.warning: str | None = None

    def exists(self) -> bool:
        return self.path.exists()

    def load(self) -> list[Block]:
        """All decodable blocks; truncates a torn final record in place.

        The newline terminator is written last, so an unterminated tail means
        the append never finished: that tail is dropped.  A terminated record
        that fails to decode was written whole and later damaged; that is
        CorruptStore, wherever it sits.
        """
        self.warning = None
        raw = self.path.read_bytes()
        blocks: list[Block] = []
        offset = 0
        lines = raw.split(b"\n")
        # a well-formed file ends with a newline, so the final split part is empty
        body, tail = lines[:-1], lines[-1]
        for index, line in enumerate(body):
            try:
                blocks.append(decode_block(base64.b64decode(line, validate=True)))
            except (binascii.Error, ValueError, DecodeError) as exc:
                raise CorruptStore(f"record {index + 1} of {len(body)}: {exc}") from None
            offset += len(line) + 1
        if tail:
            self._truncate(offset, "final record has no terminator")
        return blocks

    def _truncate(self, offset: int, reason: str) -> None:
        self.warning = f"torn write recovered: {reason}; truncated to {offset} bytes"
        with open(self.path, "rb+") as fh:
            fh.truncate(offset)
            fh.flush()
            os.fsync(fh.fileno())

    def append(self, block: Block) -> None:
        self.data_dir.mkdir(parents=True, exist_ok=True)
        line = base64.b64encode(block.encode()) + b"\n"
        with open(self.path, "ab") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())

    def rewrite(self, blocks: list[Block]) -> None:
        """Full rewrite via a temp file; only used at initialization."""
        self.data_dir.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".tmp")
        with open(tmp, "wb") as fh:
            for block in blocks:
                fh.write(base64.b64encode(block.encode()) + b"\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.path)
