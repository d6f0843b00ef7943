import os

BASE_DIR = os.path.abspath(os.path.dirname(os.path.dirname(__file__)))
DATA_DIR = os.environ.get("PW_DATA_DIR") or os.path.join(BASE_DIR, "data")
REPORTS_DIR = os.path.join(DATA_DIR, "reports")
DB_PATH = os.path.join(DATA_DIR, "permitwatch.db")

# 15 Hz control-system clock
TICK_RATE_HZ = 15
TICKS_PER_HOUR = TICK_RATE_HZ * 3600

# outage / non-outage extraction
MIN_OUTAGE_TICKS = 150          # 10 s
PRE_DROP_TICKS = 450            # 30 s before the drop
POST_DROP_TICKS = 150           # 10 s after
INSTANCE_TICKS = PRE_DROP_TICKS + POST_DROP_TICKS
NON_OUTAGE_MIN_RUN_TICKS = 27_000   # 30 min of permit up
NON_OUTAGE_CROP_OFFSET = 18_000     # 20th minute

# forecasting defaults
LOOKBACK = 30
GAP = 30
HORIZON = 60
THRESHOLD = 0.5

# labeling defaults
LABEL_LOOKBACK = 6
BIT_WINDOW_TICKS = 30           # 2 s after the drop
N_ESTIMATORS = 200

SCHEMA_VERSION = 1
