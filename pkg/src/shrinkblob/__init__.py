"""Shrinking-blob particle model for the Euclidean travelling salesman problem."""

from .geometry import CityDataset, Tour, convex_hull, generate_dataset, tour_length
from .oracle import DistanceMatrix, brute_force, held_karp, two_opt
from .swarm import NoConvergenceError, SimState, SwarmConfig, init_blob, run_until_halt
from .tracer import CityOffPerimeterError, extract_mask, read_tour, trace_boundary

__version__ = "0.1.0"

__all__ = [
    "CityDataset", "Tour", "convex_hull", "generate_dataset", "tour_length",
    "DistanceMatrix", "brute_force", "held_karp", "two_opt",
    "NoConvergenceError", "SimState", "SwarmConfig", "init_blob", "run_until_halt",
    "CityOffPerimeterError", "extract_mask", "read_tour", "trace_boundary",
]
