"""Per-node state machine: mining results and peer announcements in, announcements out.

``handle_input`` never touches a clock or a socket, so the simulator (or any
other transport) drives it by feeding inputs and acting on the outputs.
"""
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Tuple, Union

from pourl.consensus import Preference, TieBreakRule, compare_chains
from pourl.dqn import AgentState, rebuild_replay_from_chain
from pourl.environment import Oracle
from pourl.errors import ChainError
from pourl.hashchain import Block, Chain, append_block, matches_tip, tip_digest, validate_chain


@dataclass(frozen=True)
class MiningJob:
    job_id: int
    tip_digest: bytes
    finish_time: float


@dataclass(frozen=True)
class NodeHandle:
    node_id: int
    agent: AgentState
    chain: Chain
    pending: Optional[MiningJob] = None


# -- inputs ------------------------------------------------------------------

@dataclass(frozen=True)
class StartMining:
    pass


@dataclass(frozen=True)
class MiningFinished:
    block: Block


@dataclass(frozen=True)
class ChainAnnounced:
    chain: Chain
    tip_digest: bytes
    sender: int


NodeInput = Union[StartMining, MiningFinished, ChainAnnounced]


# -- outputs ------------------------------------------------------------------

class IgnoreReason(Enum):
    SHORTER = "shorter"
    LOST_TIE_BREAK = "lost_tie_break"
    INVALID = "invalid"
    DUPLICATE = "duplicate"


@dataclass(frozen=True)
class Announce:
    chain: Chain
    tip_digest: bytes


@dataclass(frozen=True)
class RequestMining:
    tip: Block


@dataclass(frozen=True)
class Ignore:
    reason: IgnoreReason
    detail: str = ""


NodeOutput = Union[Announce, RequestMining, Ignore]


def _announce(chain: Chain) -> Announce:
    return Announce(chain=chain, tip_digest=tip_digest(chain))


def _on_mined(node: NodeHandle, block: Block, oracle: Oracle) -> Tuple[NodeHandle, List[NodeOutput]]:
    try:
        chain = append_block(node.chain, block, oracle)
    except ChainError as exc:
        return node, [Ignore(IgnoreReason.INVALID, f"own block rejected: {exc}")]
    node = replace(node, chain=chain, pending=None)
    return node, [_announce(chain), RequestMining(chain.tip)]


def _on_announced(
    node: NodeHandle, message: ChainAnnounced, oracle: Oracle, rule: TieBreakRule
) -> Tuple[NodeHandle, List[NodeOutput]]:
    candidate = message.chain
    if len(candidate) == 0 or not matches_tip(candidate, message.tip_digest):
        return node, [Ignore(IgnoreReason.INVALID, "announced tip digest does not match the chain")]
    preference = compare_chains(node.chain, candidate, rule)
    if preference is Preference.IDENTICAL:
        return node, [Ignore(IgnoreReason.DUPLICATE)]
    verdict = validate_chain(candidate, oracle)
    if not verdict.ok:
        return node, [Ignore(IgnoreReason.INVALID, f"height {verdict.height}: {verdict.error}")]
    if preference is Preference.SHORTER:
        return node, [Ignore(IgnoreReason.SHORTER)]
    if preference is Preference.TIE_BREAK_LOST:
        return node, [Ignore(IgnoreReason.LOST_TIE_BREAK)]
    agent = rebuild_replay_from_chain(node.agent, candidate, oracle, trusted=True)
    node = replace(node, chain=candidate, agent=agent, pending=None)
    return node, [RequestMining(candidate.tip)]


def handle_input(
    node: NodeHandle, message: NodeInput, oracle: Oracle, rule: TieBreakRule
) -> Tuple[NodeHandle, List[NodeOutput]]:
    if isinstance(message, StartMining):
        return node, [RequestMining(node.chain.tip)]
    if isinstance(message, MiningFinished):
        return _on_mined(node, message.block, oracle)
    if isinstance(message, ChainAnnounced):
        return _on_announced(node, message, oracle, rule)
    return node, [Ignore(IgnoreReason.INVALID, f"unknown input {type(message).__name__}")]
