"""Energy-aware federated learning scheduling: simulator, baselines and a safe SAC agent."""

__version__ = "0.1.0"
