from .variants import (
    build_exclusive_qubo,
    build_flexible_qubo,
    build_global_qubo,
    build_interstitial_qubo,
    flexible_penalties,
    global_penalties,
    interstitial_penalties,
)
from .bqf import (
    AccumDelay,
    Ancilla,
    BinaryQuadraticForm,
    DelayDiff,
    DepartureDelay,
    Index,
    IsingForm,
    Maneuver,
    PairDelay,
    PairTheta,
    QuboBuilder,
    Theta,
    encoding_penalty,
    max_coefficient_ratio,
    s_gadget,
    to_ising,
)
from .io import QuboFormatError, export_qubo, import_qubo, read_qubo, write_qubo
from .models import (
    Discretization,
    PenaltyWeights,
    Solution,
    build_departure_qubo,
    decode,
    greedy_delays,
    sufficient_penalties,
)

MODELS = ("departure", "global", "exclusive", "flexible", "interstitial")

__all__ = [
    "MODELS",
    "AccumDelay",
    "Ancilla",
    "BinaryQuadraticForm",
    "DelayDiff",
    "DepartureDelay",
    "Discretization",
    "Index",
    "IsingForm",
    "Maneuver",
    "PairDelay",
    "PairTheta",
    "PenaltyWeights",
    "QuboBuilder",
    "QuboFormatError",
    "Solution",
    "Theta",
    "build_departure_qubo",
    "build_exclusive_qubo",
    "build_flexible_qubo",
    "build_global_qubo",
    "build_interstitial_qubo",
    "decode",
    "encoding_penalty",
    "export_qubo",
    "flexible_penalties",
    "global_penalties",
    "greedy_delays",
    "import_qubo",
    "interstitial_penalties",
    "max_coefficient_ratio",
    "read_qubo",
    "s_gadget",
    "sufficient_penalties",
    "to_ising",
    "write_qubo",
]
