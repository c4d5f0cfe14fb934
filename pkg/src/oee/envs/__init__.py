from oee.envs.archery import Archery, ArcherySpec
from oee.envs.cartpole import Cartpole, CartpoleSpec
from oee.envs.gaussian import GaussianPairSpec, gaussian_pair_sample, true_gaussian_ratio
from oee.envs.gridworld import Gridworld, GridworldSpec, gridworld_transition_prob, true_zeta_gridworld

__all__ = [
    "Archery", "ArcherySpec", "Cartpole", "CartpoleSpec", "GaussianPairSpec", "Gridworld",
    "GridworldSpec", "gaussian_pair_sample", "gridworld_transition_prob", "true_gaussian_ratio",
    "true_zeta_gridworld",
]
