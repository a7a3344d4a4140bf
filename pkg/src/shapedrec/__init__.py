"""Reward-shaped off-policy REINFORCE recommender with a satisfaction-imputation head."""

__version__ = "0.1.0"
