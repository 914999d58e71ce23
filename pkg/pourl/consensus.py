"""Fork choice (longest chain, then reward tie-break) and the award ledger."""
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List

from pourl.environment import Oracle
from pourl.errors import InvalidCandidate
from pourl.hashchain import Chain, tip_digest, validate_chain


class TieBreakRule(Enum):
    LAST_REWARD = "last_reward"  # compare the tip block's reward
    SUM_REWARD = "sum_reward"  # compare the reward summed over every block

    @property
    def description(self) -> str:
        if self is TieBreakRule.LAST_REWARD:
            return "Equal-length chains: the higher reward at the tip block wins."
        return "Equal-length chains: the higher reward summed over all blocks wins."


class Preference(Enum):
    LONGER = "longer"
    SHORTER = "shorter"
    TIE_BREAK_WON = "tie_break_won"
    TIE_BREAK_LOST = "tie_break_lost"
    IDENTICAL = "identical"

    @property
    def candidate_wins(self) -> bool:
        return self in (Preference.LONGER, Preference.TIE_BREAK_WON)


@dataclass(frozen=True)
class LedgerEntry:
    node_id: int
    award: float


def chain_score(chain: Chain, rule: TieBreakRule) -> float:
    if rule is TieBreakRule.LAST_REWARD:
        return chain.tip.reward
    total = 0.0
    for block in chain:
        total += block.reward
    return total


def compare_chains(local: Chain, candidate: Chain, rule: TieBreakRule) -> Preference:
    """How ``candidate`` ranks against ``local``; no validation happens here."""
    if len(candidate) != len(local):
        return Preference.LONGER if len(candidate) > len(local) else Preference.SHORTER
    local_digest, candidate_digest = tip_digest(local), tip_digest(candidate)
    if local_digest == candidate_digest:
        return Preference.IDENTICAL
    local_score, candidate_score = chain_score(local, rule), chain_score(candidate, rule)
    if candidate_score != local_score:
        won = candidate_score > local_score
    else:
        won = candidate_digest < local_digest
    return Preference.TIE_BREAK_WON if won else Preference.TIE_BREAK_LOST


def fork_choice(local: Chain, candidate: Chain, rule: TieBreakRule, oracle: Oracle) -> Chain:
    verdict = validate_chain(candidate, oracle)
    if not verdict.ok:
        raise InvalidCandidate(verdict.height, verdict.error)
    if compare_chains(local, candidate, rule).candidate_wins:
        return candidate
    return local


def best_chain(chains: List[Chain], rule: TieBreakRule) -> Chain:
    """Winner among already-validated chains under the same ordering fork_choice uses."""
    best = chains[0]
    for chain in chains[1:]:
        if compare_chains(best, chain, rule).candidate_wins:
            best = chain
    return best


def compute_awards(chain: Chain) -> List[LedgerEntry]:
    totals: Dict[int, float] = {}
    for block in chain.blocks[1:]:
        totals[block.author] = totals.get(block.author, 0.0) + block.reward
    return [LedgerEntry(node_id=node, award=totals[node]) for node in sorted(totals)]
