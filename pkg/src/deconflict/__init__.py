"""Flight de-confliction: conflict detection, instance extraction, QUBO
compilation and solving."""

__version__ = "0.1.0"
