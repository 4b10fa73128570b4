"""Desk-scale laboratory for hybrid deep/least-squares Q-learning.

An online DQN/DDQN trainer whose linear head is periodically re-solved in
closed form from large replay snapshots (fixed-point or regression systems,
anchored to the current weights by a Bayesian-prior ridge term), plus exact
dynamic-programming oracles, an optimizer/batch-size ablation harness, and
signed-rank reporting of learning curves.
"""

__version__ = "0.1.0"
