"""Mean-field limits of network dynamics on directed hypergraph measures.

Flat-metric tools for finite measures, hypergraph measures and their
discretizations, the lattice ODE and Vlasov characteristic flow, ready-made
models and a command line runner.
"""
from .measure_core import (AtomicMeasure, Space, UniformMeasure, bl_distance, dirac, mass,
                           product_measure, push_forward, quantize)
from .dhgm import (AdjacencyTensor, Partition, d_alpha, d_infinity, gallery, make_partition,
                   representation_gap)
from .dynamics import (CouplingLayer, ModelSpec, check_invariance, convergence_study, discretize,
                       gronwall_check, integrate, lipschitz_budget, picard_fixed_point,
                       rhs_lattice, solve_characteristics, v_operator, weak_residual)

__version__ = "0.1.0"
