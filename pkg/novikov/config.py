"""
Numerical defaults for the peakon lab

Edit these to change what every run falls back to.
Run configs override them per experiment.
"""

# Truncated line
DEFAULT_X_LEFT = -40.0  # left end of the grid
DEFAULT_X_RIGHT = 40.0  # right end of the grid
DEFAULT_NODES = 4097  # dx = 80/4096
MIN_GRID_NODES = 64  # coarser grids cannot resolve a crest

# Time stepping
DEFAULT_CFL = 0.3  # Courant fraction against max |uv|
DEFAULT_DT_MAX = 0.05  # cap used when the state is nearly zero
DEFAULT_RECORD_EVERY = 10  # accepted steps between snapshots
SPEED_FLOOR = 1e-12  # keeps the CFL quotient finite on the zero state

# Initial data
DEFAULT_MOLLIFIER_WIDTH = 0.2  # gaussian width of momentum bumps
MOLLIFIER_SUPPORT = 4.0  # bump is cut at +/- 4 widths (support 8w)
PERTURBATION_BUMPS = 8  # random bumps per momentum component

# Weight family
MIN_WEIGHT_SCALE = 4.0  # smallest admissible K
WEIGHT_SAMPLE_POINTS = 10001  # nodes on [-1, 1]
WEIGHT_RATIO_CEILING = 40.0  # gate on max |psi'''/psi'| inside [-1, 1]

# Orbit fitting
ORBIT_SCAN_HALF_WIDTH = 1.0  # coarse shift scan around the argmax
ORBIT_SHIFT_TOLERANCE = 1e-4  # refinement tolerance, in units of dx

# Modulation
MODULATION_TOLERANCE = 1e-8  # relative to a_1^2 + b_1^2
MODULATION_MAX_ITERATIONS = 50
MODULATION_MIN_SEPARATION = 4.0

# Logging
LOG_LEVEL = "INFO"  # "DEBUG", "INFO" or "ERROR"
