"""Numerical tolerances shared by the solvers, the model builders and the tests."""

# simplex
PIVOT = 1e-9            # smallest usable pivot / ratio-test coefficient
OPTIMALITY = 1e-9       # reduced-cost tolerance
FEASIBILITY = 1e-7      # constraint residual accepted as satisfied
BOUND = 1e-9            # variable bound violation accepted as satisfied
BREAKDOWN = 1e-11       # pivot magnitude treated as a numerical breakdown
DEGENERATE_STEP = 1e-12
DEGENERACY_LIMIT = 50   # consecutive degenerate pivots before switching to Bland's rule

# branch and bound
INTEGRALITY = 1e-6
ABSOLUTE_GAP = 1e-8

# power balance checks (MW)
BALANCE = 1e-6
