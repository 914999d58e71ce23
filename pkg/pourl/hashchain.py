"""Blocks, canonical serialization, hash linkage and chain validation.

A block at height k+1 carries the digest of block k, so changing any field
of a non-tip block breaks the linkage at the next height. The tip is only
protected by the digest peers announce alongside it (see ``tip_digest``).
"""
import hashlib
import math
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Optional, Sequence, Tuple, Union, overload

from pourl.environment import EnvState, Oracle, StepResult, same_bits, same_state_bits
from pourl.errors import (
    ChainError,
    DumpFormatError,
    GenesisInvalid,
    HashMismatch,
    HeightMismatch,
    InvalidChain,
    OracleError,
    TransitionInvalid,
)

NO_ACTION = 0xFFFFFFFF
DIGEST_SIZE = 32
ZERO_HASH = bytes(DIGEST_SIZE)
MAX_PAYLOAD = 1 << 20
_U32 = 0xFFFFFFFF
_U64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class Block:
    height: int
    state: EnvState
    action: int
    reward: float
    payload: bytes
    prev_hash: bytes
    author: int

    def __post_init__(self) -> None:
        if not 0 <= self.height <= _U64:
            raise ValueError(f"height {self.height} is not an unsigned 64-bit value")
        if not 0 <= self.action <= _U32:
            raise ValueError(f"action {self.action} is not an unsigned 32-bit value")
        if not 0 <= self.author <= _U32:
            raise ValueError(f"author {self.author} is not an unsigned 32-bit value")
        if len(self.prev_hash) != DIGEST_SIZE:
            raise ValueError("prev_hash must be 32 bytes")
        if len(self.payload) > MAX_PAYLOAD:
            raise ValueError(f"payload of {len(self.payload)} bytes exceeds {MAX_PAYLOAD}")

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.reward) and all(math.isfinite(v) for v in self.state)

    @cached_property
    def digest(self) -> bytes:
        return hashlib.sha256(canonical_bytes(self)).digest()


def canonical_bytes(block: Block) -> bytes:
    n = len(block.state)
    return b"".join((
        struct.pack("<QI", block.height, n),
        struct.pack(f"<{n}d", *block.state),
        struct.pack("<Id", block.action, block.reward),
        struct.pack("<I", len(block.payload)),
        block.payload,
        block.prev_hash,
        struct.pack("<I", block.author),
    ))


def decode_block(data: bytes) -> Block:
    """Inverse of canonical_bytes. Values are not range-checked beyond the layout."""
    try:
        height, n = struct.unpack_from("<QI", data, 0)
        offset = 12
        state = struct.unpack_from(f"<{n}d", data, offset)
        offset += 8 * n
        action, reward = struct.unpack_from("<Id", data, offset)
        offset += 12
        (size,) = struct.unpack_from("<I", data, offset)
        offset += 4
        payload = bytes(data[offset:offset + size])
        if len(payload) != size:
            raise DumpFormatError("payload truncated")
        offset += size
        prev_hash = bytes(data[offset:offset + DIGEST_SIZE])
        offset += DIGEST_SIZE
        (author,) = struct.unpack_from("<I", data, offset)
        offset += 4
    except struct.error as exc:
        raise DumpFormatError(f"block record truncated: {exc}") from exc
    if offset != len(data):
        raise DumpFormatError(f"{len(data) - offset} trailing bytes after block record")
    try:
        return Block(height, tuple(state), action, reward, payload, prev_hash, author)
    except ValueError as exc:
        raise DumpFormatError(str(exc)) from exc


def hash_block(block: Block) -> bytes:
    return block.digest


@dataclass(frozen=True)
class Chain:
    blocks: Tuple[Block, ...]

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self) -> Iterator[Block]:
        return iter(self.blocks)

    @overload
    def __getitem__(self, index: int) -> Block: ...

    @overload
    def __getitem__(self, index: slice) -> "Chain": ...

    def __getitem__(self, index: Union[int, slice]) -> Union[Block, "Chain"]:
        if isinstance(index, slice):
            return Chain(self.blocks[index])
        return self.blocks[index]

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    def extended(self, block: Block) -> "Chain":
        """Unchecked append; use append_block for anything from outside."""
        return Chain(self.blocks + (block,))


@dataclass(frozen=True)
class ChainVerdict:
    height: Optional[int] = None
    error: Optional[ChainError] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def __bool__(self) -> bool:
        return self.ok


def make_genesis(oracle: Oracle) -> Block:
    return Block(
        height=0,
        state=oracle.spec.initial_state,
        action=NO_ACTION,
        reward=0.0,
        payload=b"",
        prev_hash=ZERO_HASH,
        author=0,
    )


def genesis_chain(oracle: Oracle) -> Chain:
    return Chain((make_genesis(oracle),))


def tip_digest(chain: Chain) -> bytes:
    return hash_block(chain.tip)


def matches_tip(chain: Chain, digest: bytes) -> bool:
    return len(chain) > 0 and tip_digest(chain) == digest


def _claimed(oracle: Oracle, block: Block) -> StepResult:
    return StepResult(block.state, block.reward, oracle.is_terminal(block.state))


def _check_transition(oracle: Oracle, parent: Block, block: Block) -> Optional[ChainError]:
    if not block.is_finite:
        return TransitionInvalid(f"block {block.height} holds a non-finite state or reward")
    try:
        start = oracle.chain_state(parent.state)
        if oracle.verify_transition(start, block.action, _claimed(oracle, block)):
            return None
    except OracleError as exc:
        return TransitionInvalid(f"block {block.height}: {exc}")
    return TransitionInvalid(
        f"block {block.height} does not record what the oracle returns for action {block.action}"
    )


def _check_genesis(oracle: Oracle, genesis: Block) -> Optional[ChainError]:
    if genesis.height != 0:
        return GenesisInvalid(f"first block has height {genesis.height}")
    if genesis.action != NO_ACTION or not same_bits(genesis.reward, 0.0) or genesis.prev_hash != ZERO_HASH:
        return GenesisInvalid("genesis must carry no action, zero reward and a zero prev_hash")
    if not same_state_bits(tuple(genesis.state), tuple(oracle.spec.initial_state)):
        return GenesisInvalid("genesis state differs from the oracle's initial state")
    return None


def append_block(chain: Chain, block: Block, oracle: Oracle) -> Chain:
    tip = chain.tip
    if block.height != tip.height + 1:
        raise HeightMismatch(f"expected height {tip.height + 1}, got {block.height}")
    if block.prev_hash != hash_block(tip):
        raise HashMismatch(f"block {block.height} does not link to tip {hash_block(tip).hex()[:16]}")
    problem = _check_transition(oracle, tip, block)
    if problem is not None:
        raise problem
    return chain.extended(block)


def validate_chain(chain: Chain, oracle: Oracle) -> ChainVerdict:
    """Return the lowest failing height, checking linkage over the whole chain first."""
    blocks = chain.blocks
    if not blocks:
        return ChainVerdict(0, InvalidChain("chain has no genesis block"))
    for k in range(1, len(blocks)):
        if blocks[k].prev_hash != hash_block(blocks[k - 1]):
            return ChainVerdict(k, HashMismatch(f"block {k} does not link to block {k - 1}"))
    problem = _check_genesis(oracle, blocks[0])
    if problem is not None:
        return ChainVerdict(0, problem)
    for k in range(1, len(blocks)):
        if blocks[k].height != k:
            return ChainVerdict(k, HeightMismatch(f"block at index {k} claims height {blocks[k].height}"))
        problem = _check_transition(oracle, blocks[k - 1], blocks[k])
        if problem is not None:
            return ChainVerdict(k, problem)
    return ChainVerdict()


def common_prefix_length(a: Chain, b: Chain) -> int:
    """Number of leading blocks the two chains share."""
    n = 0
    for left, right in zip(a.blocks, b.blocks):
        if hash_block(left) != hash_block(right):
            break
        n += 1
    return n


def build_chain(
    oracle: Oracle,
    actions: Sequence[int],
    author: int = 0,
    payloads: Optional[Sequence[bytes]] = None,
    base: Optional[Chain] = None,
) -> Chain:
    """Extend ``base`` (or a fresh genesis) by replaying ``actions`` through the oracle."""
    chain = base if base is not None else genesis_chain(oracle)
    for i, action in enumerate(actions):
        tip = chain.tip
        result = oracle.step(oracle.chain_state(tip.state), action)
        payload = payloads[i] if payloads is not None else f"tx:{author}:{tip.height + 1}".encode()
        block = Block(
            height=tip.height + 1,
            state=result.next_state,
            action=action,
            reward=result.reward,
            payload=payload,
            prev_hash=hash_block(tip),
            author=author,
        )
        chain = append_block(chain, block, oracle)
    return chain
