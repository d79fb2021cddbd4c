import os
from pathlib import Path
from dotenv import load_dotenv
import logging
from logging.handlers import RotatingFileHandler

# Load environment variables
load_dotenv()

PROJECT_ROOT = Path(__file__).resolve().parent.parent

# Zoning Configurations
ZONING_CONFIG = {
    'r': 2,
    'tau': 0.15,
    'seed': 42,
    'max_iter': 300,
    'include_rigid_mode': False,
    'zero_mode_rtol': 1e-8
}

# Spectral Configurations
SPECTRAL_CONFIG = {
    'power_tol': 1e-12,
    'power_max_iter': 10000,
    'coupling_rtol': 1e-12,
    'tie_rtol': 1e-12,
    'reduction_rtol': 1e-8
}

# Sensitivity Configurations
SENSITIVITY_CONFIG = {
    'epsilon': 0.2,
    'degeneracy_rtol': 1e-8,
    'min_base_entry': 1e-12
}

# Simulation Configurations
SIMULATION_CONFIG = {
    'dt': 1e-3,
    'horizon': 10.0,
    'damping': 0.0
}

# Output Configurations
OUTPUT_CONFIG = {
    'schema_version': 1,
    'formats': ('json', 'csv', 'svg'),
    'nonnegative_transform': 'absolute'
}


def get_fixture_dir() -> Path:
    """Fixture directory, overridable through IZONE_FIXTURES."""
    override = os.getenv('IZONE_FIXTURES')
    if override:
        return Path(override)
    return PROJECT_ROOT / 'fixtures'


# Setup logging
def setup_logging():
    logging.basicConfig(
        level=os.getenv('IZONE_LOG_LEVEL', 'INFO'),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            RotatingFileHandler(
                os.getenv('IZONE_LOG_FILE', 'izone.log'),
                maxBytes=1024*1024,
                backupCount=5
            ),
            logging.StreamHandler()
        ]
    )
