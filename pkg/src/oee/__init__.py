"""Off-environment evaluation: transition-ratio estimation between a simulator
MDP and a target MDP, and target-return estimation from simulator rollouts."""

__version__ = "0.1.0"
