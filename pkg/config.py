import os
import math
from dotenv import load_dotenv

load_dotenv()

TOOL_NAME = "nlqc-lab"
TOOL_VERSION = "1.0.0"

# Only environment override the lab honours.
OUTPUT_DIR = os.getenv("NLQC_OUTPUT_DIR", "./runs")

# Numerical tolerances
INPUT_TOL = 1e-9
OUTPUT_TOL = 1e-10
SINGULAR_CUTOFF = 1e-12
EIGEN_FLOOR = 1e-14
EXACT_TOL = 1e-12

# Size caps
DENSE_DIM_CAP = 2 ** 12
STATEVECTOR_DIM_CAP = 2 ** 22
PBT_DIM_CAP = 2 ** 20
CASCADE_MAX_PORTS = 3

# Geometry
QUARTER_ANGLE = 2 * math.pi / 8

# Light-cone fit
LR_A_FLOOR = 1e-12
LR_B_FLOOR = 1e-3
LR_V_FLOOR = 1e-3
LR_INFLATION = 1.0 + 1e-12
LR_ZERO_RATIO = 1e-15

# Error certificates
DEFAULT_C_CFT = 1.0
DEFAULT_C_SIM = 1.0
DEFAULT_C_SPREAD = 1.0
MAX_ISOMETRY_DEFECT = 0.5

# Execution
DEFAULT_JOBS = 1
DEFAULT_SEED = 0
DEFAULT_TRIALS = 20

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFICATION = 2
