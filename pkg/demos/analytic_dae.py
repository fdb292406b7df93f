"""
Implicit Euler on a two-component DAE
=====================================

The smallest system in the package has one differential and one
algebraic unknown.  Its exact differential component is ``exp(-1.5 t)``,
so halving the step should halve the endpoint error.
"""

import math

import numpy as np

from paradae import Propagator, PropagatorConfig, build_model

sys = build_model("analytic2x2")
print("mass matrix:\n", sys.mass)
print("differential indices:", sys.projectors.differential_index_set)
print("algebraic indices:   ", sys.projectors.algebraic_index_set)

###############################################################################
# Halve the step four times and watch the error follow dt.

errors = []
for dt in 1e-2 / 2.0 ** np.arange(5):
    u = Propagator(sys, PropagatorConfig(dt)).propagate(1.0, 0.0, sys.initial_state())
    errors.append(abs(u.values[0] - math.exp(-1.5)))
    print(f"dt={dt:.2e}  error={errors[-1]:.3e}")

orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
print("observed orders:", np.round(orders, 3))
