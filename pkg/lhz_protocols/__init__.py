"""
LHZ Protocol Workbench - Optimized Annealing Protocols for Parity-Encoded Spin Glasses

Samples fully connected spin-glass instances, maps them onto the LHZ parity
layout, groups them by minimum spectral gap and optimizes one fixed
annealing protocol per group with dCRAB.
"""

__version__ = "1.0.0"
__author__ = "LHZ Protocol Workbench Team"
