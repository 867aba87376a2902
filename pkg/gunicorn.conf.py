# Gunicorn configuration file
import logging

import settings

# Timeout for workers (in seconds)
# Simulate requests are bounded by the PPA_SERVICE_MAX_* limits in settings.py
timeout = 120

# Verification tasks live in process memory, so keep a single worker
workers = 1
threads = 4

# Binding
bind = "0.0.0.0:8080"

# Logging
accesslog = "-"
errorlog = "-"
loglevel = "info"


def post_worker_init(worker):
    # library modules log through their own loggers; route them to stderr
    logging.basicConfig(level=settings.LOG_LEVEL, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
