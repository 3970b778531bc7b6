"""
Environment Defaults
--------------------
Run-wide defaults read from the environment (a `.env` file is honoured).
Scenario files override these per run.
"""

from __future__ import annotations

import os

from dotenv import load_dotenv

load_dotenv()

DEFAULT_TIME_STEPS = int(os.getenv("GOODWILL_TIME_STEPS", "200"))
DEFAULT_QUAD_POINTS = int(os.getenv("GOODWILL_QUAD_POINTS", "64"))
DEFAULT_MODES = int(os.getenv("GOODWILL_MODES", "8"))
DEFAULT_SEED = int(os.getenv("GOODWILL_SEED", "0"))
DEFAULT_LOG_LEVEL = os.getenv("GOODWILL_LOG_LEVEL", "INFO")
DEFAULT_OUTPUT_DIR = os.getenv("GOODWILL_OUTPUT_DIR", "out")

# verification oracle defaults
DEFAULT_FD_CELLS = int(os.getenv("GOODWILL_FD_CELLS", "48"))
DEFAULT_FD_STEPS = int(os.getenv("GOODWILL_FD_STEPS", "400"))
DEFAULT_DP_STEPS = int(os.getenv("GOODWILL_DP_STEPS", "20000"))
DEFAULT_DIRECTIONS = int(os.getenv("GOODWILL_GATEAUX_DIRECTIONS", "8"))
DEFAULT_CONTROL_GRID = int(os.getenv("GOODWILL_CONTROL_GRID", "11"))
