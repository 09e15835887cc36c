"""
Lab host configuration - loads from .env file
Numerical defaults live in novikov/config.py; this file only holds host settings
"""

import os

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Where runs write when neither --out nor the config names a directory
OUTPUT_DIR = os.getenv("LAB_OUTPUT_DIR", "runs")

# "DEBUG", "INFO" or "ERROR"
LOG_LEVEL = os.getenv("LAB_LOG_LEVEL", "INFO")

# Sweep members run in this many processes (1 = sequential)
MAX_WORKERS = int(os.getenv("LAB_MAX_WORKERS", 1))

# Single-line progress for long loops
SHOW_PROGRESS = os.getenv("LAB_PROGRESS", "1").lower() not in ("0", "false", "no")
