"""
PPA Cooling - HTTP Service
==========================

JSON API over the simulator:
- GET  /api/health
- GET  /api/asymptote                 closed-form limits
- POST /api/simulate                  one PPA run, summary plus p0 series
- POST /api/sweep                     limit/bound table
- POST /api/verify                    starts a verification suite in the background
- GET  /api/verify/status/<task_id>   poll it

Run with: python cooling_app.py
"""

import logging
import threading
import time
import traceback as tb_module
import uuid

from flask import Flask, jsonify, request
from flask_cors import CORS

import settings
from asymptotics import TemperatureSpec, predict
from cooling_state import RATIONAL
from errors import CoolingError, InvalidParameterError
from ppa_cli import SweepSpec, build_reset, run_sweep
from ppa_engine import METRIC_P0, PRESET_MAXIMALLY_MIXED, RECORD_SUMMARY, RunConfig, run
from result_export import git_describe, to_jsonable, trajectory_summary
from verification import SUITE_ALL, SUITES, run_suite

app = Flask(__name__)
CORS(app)
app.logger.setLevel(settings.LOG_LEVEL)

# In-memory store for background verification tasks
_verify_tasks = {}
_TASK_TTL = 3600
_MAX_SERVICE_TRIALS = 5000


@app.errorhandler(CoolingError)
def handle_cooling_error(e):
    return jsonify({'error': str(e)}), 400


def _int_field(data, name, default=None, low=None, high=None):
    value = data.get(name, default)
    if value is None:
        return None
    try:
        value = int(value)
    except (TypeError, ValueError):
        raise InvalidParameterError(f"'{name}' must be an integer")
    if low is not None and value < low:
        raise InvalidParameterError(f"'{name}' must be >= {low}")
    if high is not None and value > high:
        raise InvalidParameterError(f"'{name}' must be <= {high}")
    return value


def _float_field(data, name, default=None):
    value = data.get(name, default)
    if value is None:
        return None
    try:
        return float(value)
    except (TypeError, ValueError):
        raise InvalidParameterError(f"'{name}' must be a number")


def _reset_from(data):
    reset_probs = data.get('reset_probs')
    if reset_probs is not None:
        count = len(reset_probs) if isinstance(reset_probs, (list, tuple)) else str(reset_probs).count(',') + 1
        if count > settings.SERVICE_MAX_RESET_LEVELS:
            raise InvalidParameterError(f"'reset_probs' may hold at most {settings.SERVICE_MAX_RESET_LEVELS} levels")
    reset = build_reset(
        epsilon=_float_field(data, 'epsilon'),
        reset_probs=reset_probs,
        tensor_qubits=_int_field(data, 'tensor_qubits', low=1, high=settings.SERVICE_MAX_TENSOR_QUBITS),
        rational=data.get('backend') == RATIONAL,
    )
    if reset.k > settings.SERVICE_MAX_RESET_LEVELS:
        raise InvalidParameterError(f"Reset may have at most {settings.SERVICE_MAX_RESET_LEVELS} levels")
    return reset


def _check_size(n, reset):
    """Reject registers too large to iterate within one request"""
    if n is None:
        return
    if 2 ** n * reset.k > settings.SERVICE_MAX_JOINT_DIM:
        raise InvalidParameterError(
            f"2^n * k = {2 ** n * reset.k} exceeds the service limit of {settings.SERVICE_MAX_JOINT_DIM}"
        )
    if reset.backend == RATIONAL and n > settings.SERVICE_MAX_RATIONAL_QUBITS:
        raise InvalidParameterError(f"Rational runs are limited to n <= {settings.SERVICE_MAX_RATIONAL_QUBITS}")


def _iteration_cap(n, reset):
    if reset.backend == RATIONAL:
        return settings.SERVICE_MAX_RATIONAL_ITERATIONS
    budget = settings.SERVICE_MAX_WORK // (2 ** n * reset.k)
    return max(1, min(settings.SERVICE_MAX_ITERATIONS, budget))


def _json_body():
    data = request.get_json(silent=True)
    if not isinstance(data, dict):
        raise InvalidParameterError('Request body must be a JSON object')
    return data


# ============================================================================
# Routes
# ============================================================================

@app.route('/api/health')
def health():
    return jsonify({'status': 'ok', 'version': git_describe()})


@app.route('/api/asymptote')
def asymptote():
    """Closed-form limits for n and a reset given as query parameters"""
    data = request.args
    n = _int_field(data, 'n', low=1, high=settings.SERVICE_MAX_QUBITS)
    if n is None:
        raise InvalidParameterError("'n' is required")
    temperature = None
    t_bath = _float_field(data, 't_bath')
    if t_bath is not None:
        temperature = TemperatureSpec(delta=_float_field(data, 'delta_ratio', 1.0), delta_total=1.0, t_bath=t_bath)
    prediction = predict(n, _reset_from(data), temperature)
    return jsonify(to_jsonable(prediction.to_dict()))


@app.route('/api/simulate', methods=['POST'])
def simulate():
    data = _json_body()
    n = _int_field(data, 'n', low=1, high=settings.SERVICE_MAX_QUBITS)
    if n is None:
        raise InvalidParameterError("'n' is required")
    reset = _reset_from(data)
    _check_size(n, reset)
    cap = _iteration_cap(n, reset)
    config = RunConfig(
        n=n,
        reset=reset,
        initial=data.get('init', PRESET_MAXIMALLY_MIXED),
        max_iterations=_int_field(data, 'max_iterations', cap, low=1, high=cap),
        convergence_tol=_float_field(data, 'tol', settings.CONVERGENCE_TOL),
        convergence_window=_int_field(data, 'window', settings.CONVERGENCE_WINDOW, low=1),
        record_mode=RECORD_SUMMARY,
        convergence_metric=data.get('metric', METRIC_P0),
    )
    trajectory = run(config)
    return jsonify(to_jsonable({
        'config': config.describe(),
        'summary': trajectory_summary(trajectory),
        'p0': trajectory.p0_series(),
    }))


@app.route('/api/sweep', methods=['POST'])
def sweep():
    data = _json_body()
    try:
        n_values = tuple(int(n) for n in data.get('n_values', []))
        epsilon_values = tuple(float(eps) for eps in data.get('epsilon_values', []))
        gap_ratios = tuple(float(r) for r in data.get('gap_ratios', [1.0]))
    except (TypeError, ValueError) as e:
        raise InvalidParameterError(f"Bad sweep grid: {e}") from e
    spec = SweepSpec(n_values=n_values, epsilon_values=epsilon_values, gap_ratios=gap_ratios)
    if max(spec.n_values) > settings.SERVICE_MAX_QUBITS:
        raise InvalidParameterError(f"n must be <= {settings.SERVICE_MAX_QUBITS}")
    rows = run_sweep(spec)
    return jsonify(to_jsonable({'columns': spec.columns(), 'rows': rows}))


@app.route('/api/verify', methods=['POST'])
def start_verify():
    """Start a verification suite - returns task_id for polling"""
    data = _json_body()
    suite = data.get('suite')
    if suite not in SUITES + (SUITE_ALL,):
        raise InvalidParameterError(f"'suite' must be one of {list(SUITES + (SUITE_ALL,))}")
    trials = _int_field(data, 'trials', 10, low=1, high=_MAX_SERVICE_TRIALS)
    seed = _int_field(data, 'seed', 0, low=0)
    n = _int_field(data, 'n', low=1, high=settings.SERVICE_MAX_QUBITS)
    reset = _reset_from(data) if ('epsilon' in data or 'reset_probs' in data) else None
    if reset is not None:
        _check_size(n, reset)

    task_id = str(uuid.uuid4())
    _verify_tasks[task_id] = {
        'status': 'running',
        'suite': suite,
        'trials': trials,
        'seed': seed,
        '_ts': time.time(),
    }
    thread = threading.Thread(
        target=_run_verify_task,
        args=(task_id, suite, trials, seed, n, reset),
        daemon=True,
    )
    thread.start()
    return jsonify({'success': True, 'task_id': task_id}), 202


@app.route('/api/verify/status/<task_id>')
def verify_status(task_id):
    """Poll verification task status"""
    # Evict finished tasks older than an hour
    now = time.time()
    stale = [k for k, v in _verify_tasks.items()
             if v.get('status') != 'running' and now - v.get('_ts', now) > _TASK_TTL]
    for k in stale:
        _verify_tasks.pop(k, None)

    task = _verify_tasks.get(task_id)
    if not task:
        return jsonify({'status': 'not_found'}), 404
    return jsonify({key: value for key, value in task.items() if not key.startswith('_')})


def _run_verify_task(task_id, suite, trials, seed, n, reset):
    """Background worker that runs one suite"""
    task = _verify_tasks[task_id]
    try:
        report = run_suite(suite, trials, seed, n=n, reset=reset)
        task.update({
            'status': 'complete',
            'passed': report.passed,
            'report': to_jsonable(report.to_dict()),
            '_ts': time.time(),
        })
    except Exception as e:
        app.logger.exception("Verification task %s failed", task_id)
        task.update({'status': 'error', 'message': str(e),
                     'details': tb_module.format_exc()[:500], '_ts': time.time()})


if __name__ == '__main__':
    logging.basicConfig(level=settings.LOG_LEVEL, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    app.run(debug=True, port=5000)
