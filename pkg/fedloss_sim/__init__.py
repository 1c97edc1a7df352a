"""FedLoss simulator - loss-weighted cross-device federated learning under label imbalance."""

__version__ = "0.1.0"
__all__ = ["__version__"]
