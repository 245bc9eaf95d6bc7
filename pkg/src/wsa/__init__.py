"""Weight Sharing Attention over frozen encoders for reinforcement learning."""
__version__ = "0.1.0"
