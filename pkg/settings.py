"""
Runtime configuration.

Values come from the environment (a local .env file is honoured). Command-line
flags and request parameters override these defaults.
"""

import os

from dotenv import load_dotenv

load_dotenv()

MAX_ITERATIONS = int(os.environ.get('PPA_MAX_ITERATIONS', '1000000'))
CONVERGENCE_TOL = float(os.environ.get('PPA_CONVERGENCE_TOL', '1e-12'))
CONVERGENCE_WINDOW = int(os.environ.get('PPA_CONVERGENCE_WINDOW', '10'))
LOG_LEVEL = os.environ.get('PPA_LOG_LEVEL', 'INFO').upper()

# Thread count for sweep grids
SWEEP_WORKERS = int(os.environ.get('PPA_SWEEP_WORKERS', '4'))

# Limits applied to requests made through the HTTP service
SERVICE_MAX_ITERATIONS = int(os.environ.get('PPA_SERVICE_MAX_ITERATIONS', '200000'))
SERVICE_MAX_QUBITS = int(os.environ.get('PPA_SERVICE_MAX_QUBITS', '12'))
SERVICE_MAX_RESET_LEVELS = int(os.environ.get('PPA_SERVICE_MAX_RESET_LEVELS', '16'))
SERVICE_MAX_TENSOR_QUBITS = int(os.environ.get('PPA_SERVICE_MAX_TENSOR_QUBITS', '4'))
SERVICE_MAX_JOINT_DIM = int(os.environ.get('PPA_SERVICE_MAX_JOINT_DIM', '8192'))
# Iterations times joint dimension allowed for one simulate request
SERVICE_MAX_WORK = int(os.environ.get('PPA_SERVICE_MAX_WORK', '200000000'))
SERVICE_MAX_RATIONAL_QUBITS = int(os.environ.get('PPA_SERVICE_MAX_RATIONAL_QUBITS', '4'))
SERVICE_MAX_RATIONAL_ITERATIONS = int(os.environ.get('PPA_SERVICE_MAX_RATIONAL_ITERATIONS', '1000'))

RUN_SLOW = os.environ.get('PPA_RUN_SLOW', '').lower() in ('1', 'true', 'yes')
