"""Multi-agent reinforcement learning simulation of the Iterated Prisoner's
Dilemma under punishment, partner selection, and reputation mechanisms."""

__version__ = "0.1.0"
