"""
Configuration management for the channel simulator.
Loads environment variables and provides configuration constants.
"""
import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
env_path = Path(__file__).parent.parent / '.env'
load_dotenv(dotenv_path=env_path)

# Data files (scenario tables, materials, tap profiles)
DATA_ROOT = Path(os.getenv('CHANSIM_DATA_ROOT', str(Path(__file__).parent.parent / 'data')))

# Logging
LOG_LEVEL = os.getenv('CHANSIM_LOG_LEVEL', 'WARNING').upper()

# Parallel drops
DEFAULT_WORKERS = int(os.getenv('CHANSIM_WORKERS', '1'))

# Propagation defaults
ENV_HEIGHT_M = float(os.getenv('CHANSIM_ENV_HEIGHT', '1.0'))  # effective environment height
INDOOR_LOSS_DB_PER_M = float(os.getenv('CHANSIM_INDOOR_LOSS_DB_PER_M', '0.5'))
