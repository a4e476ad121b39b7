"""Multi-cell massive-MIMO downlink with underlaid full-duplex D2D links.

Simulation (``topology``, ``channel``), evaluation (``metrics``), the
fractional-programming optimizer (``fp_solver``), reference systems
(``baselines``) and the Monte Carlo driver (``harness``, ``cli``).
"""
__version__ = "0.1.0"
