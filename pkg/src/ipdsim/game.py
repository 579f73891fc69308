"""Environment rules: payoffs, reputation deltas, punishment accounting.

Pure functions over small enums. Action/decision encodings (Cooperate=0,
Defect=1, NoPunish=0, Punish=1) are stable across the whole system: network
outputs, replay buffers, logs and CSVs all use them.
"""

from __future__ import annotations

from enum import Enum, IntEnum

import numpy as np


class Mode(Enum):
    """Active combination of social mechanisms.

    Selection is active iff the name ends in -S; NONE disables punishment
    and selection both (random pairing, dilemma games only).
    """

    DP = "DP"
    DP_S = "DP-S"
    TPP = "TPP"
    TPP_S = "TPP-S"
    TPPDP = "TPPDP"
    TPPDP_S = "TPPDP-S"
    NONE = "NONE"

    @property
    def selection_active(self) -> bool:
        return self.value.endswith("-S")

    @property
    def direct_punishment(self) -> bool:
        return self in (Mode.DP, Mode.DP_S, Mode.TPPDP, Mode.TPPDP_S)

    @property
    def third_party_punishment(self) -> bool:
        return self in (Mode.TPP, Mode.TPP_S, Mode.TPPDP, Mode.TPPDP_S)

    @property
    def punishment_active(self) -> bool:
        return self is not Mode.NONE

    @classmethod
    def parse(cls, text: str) -> "Mode":
        key = text.strip().upper().replace("_", "-")
        for mode in cls:
            if mode.value == key:
                return mode
        raise ValueError(f"unknown mode {text!r}; expected one of "
                         f"{', '.join(m.value for m in cls)}")


class Action(IntEnum):
    COOPERATE = 0
    DEFECT = 1


class PunishDecision(IntEnum):
    NO_PUNISH = 0
    PUNISH = 1


class Justness(Enum):
    JUST = "just"
    UNJUST = "unjust"


class RewardScheme(Enum):
    """Punishment reward schemes.

    Punishing always costs the punisher 10 and the punished 3. A just
    punisher (target defected) earns the scheme's bonus back: 7 under
    scheme 1 (net -3) or 12 under scheme 2 (net +2). Reputation moves
    +2 for a just punisher and -3 for an unjust one; being punished
    never moves the target's reputation.
    """

    SCHEME1 = 1
    SCHEME2 = 2

    @property
    def punisher_cost(self) -> int:
        return 10

    @property
    def punished_penalty(self) -> int:
        return 3

    @property
    def just_bonus(self) -> int:
        return 7 if self is RewardScheme.SCHEME1 else 12

    @property
    def just_rep_delta(self) -> int:
        return 2

    @property
    def unjust_rep_delta(self) -> int:
        return -3

    @property
    def coop_rep_delta(self) -> int:
        return 1

    @property
    def defect_rep_delta(self) -> int:
        return -1


# Row-player payoff by (own action, partner action); column player is the
# transpose, so the matrix is swap-symmetric by construction.
PAYOFF_TABLE = np.array([[3, 0], [4, 1]], dtype=np.int64)


def payoff(a1: Action, a2: Action) -> tuple[int, int]:
    """Payoffs for both players of one dilemma game."""
    return int(PAYOFF_TABLE[a1, a2]), int(PAYOFF_TABLE[a2, a1])


def play_reputation_delta(a: Action) -> int:
    """Reputation change earned by playing `a`: +1 cooperate, -1 defect."""
    return 1 if a == Action.COOPERATE else -1


def classify_punishment(target_action: Action) -> Justness:
    """A punishment is just iff the target defected in the judged game."""
    return Justness.JUST if target_action == Action.DEFECT else Justness.UNJUST


def punishment_deltas(
    scheme: RewardScheme, decision: PunishDecision, target_action: Action
) -> tuple[int, int, int]:
    """Accounting for one punishment opportunity.

    Returns (punisher reward delta, punished reward delta, punisher
    reputation delta). NoPunish leaves everything untouched.
    """
    if decision == PunishDecision.NO_PUNISH:
        return (0, 0, 0)
    if classify_punishment(target_action) is Justness.JUST:
        return (
            scheme.just_bonus - scheme.punisher_cost,
            -scheme.punished_penalty,
            scheme.just_rep_delta,
        )
    return (
        -scheme.punisher_cost,
        -scheme.punished_penalty,
        scheme.unjust_rep_delta,
    )
