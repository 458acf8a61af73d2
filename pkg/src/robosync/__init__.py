"""Leader-follower synchronization of networked two-link manipulators.

A virtual leader drives a directed network of robot arms. Each arm runs a
cooperative estimator of the leader (first layer) and an RBF-network
adaptive controller that learns its own dynamics while tracking (second
layer). Learned weights can be stored and replayed with adaptation off.
"""

__version__ = "0.1.0"
