"""Friendship and Wiener-Hopf factorisation for Markov additive processes
with exponential-polynomial jump measures."""
from .measures import ExpPolyFn, ExpPolyMeasure, DensityFn
from .map_core import (LevyComponent, MapSpec, MapSubordinatorSpec, SplitMeasure,
                       subordinator, psi, phi, pi_dual, validate_exponent)
from .friendship import (FriendshipReport, NotFriendsError, bond, check_friendship,
                         upsilon)

__version__ = "0.1.0"
