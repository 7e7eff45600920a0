"""
Exposes training and evaluation metrics via Prometheus.

Reporting functions are no-ops unless ``settings.PROMETHEUS_ENABLED``.
"""

import functools
import math

from prometheus_client import Counter
from prometheus_client import Gauge
from prometheus_client import Histogram
from prometheus_client import Info
from prometheus_client import start_http_server

from cerec import __version__
from cerec import settings

# Sweeps over desk-scale data take milliseconds, full-scale ones minutes.
SWEEP_DURATION_BUCKETS = (
    0.01,
    0.05,
    0.1,
    0.5,
    1.0,
    5.0,
    10.0,
    30.0,
    60.0,
    300.0,  # 5 min
    math.inf,
)

sweep_duration_histogram = Histogram(
    "cerec_sweep_duration_seconds",
    "Histogram of training sweep (or epoch) durations in seconds, labeled by method",
    ["method"],
    buckets=SWEEP_DURATION_BUCKETS,
)
sweep_counter = Counter(
    "cerec_sweep_total",
    "Number of training sweeps (or epochs) completed, labeled by method",
    ["method"],
)
objective_gauge = Gauge(
    "cerec_objective",
    "Training objective after the most recent sweep, labeled by method",
    ["method"],
)
accuracy_gauge = Gauge(
    "cerec_accuracy",
    "Most recent Accuracy@k, labeled by method, scenario and k",
    ["method", "scenario", "k"],
)

cerec_info = Info("cerec_version", "cerec version info")


def skip_if_prometheus_disabled(func):
    @functools.wraps(func)
    def wrapper(*args, **kwds):
        if settings.PROMETHEUS_ENABLED:
            return func(*args, **kwds)
        return None

    return wrapper


@skip_if_prometheus_disabled
def start_prometheus_server():
    cerec_info.info({"version": __version__})

    return start_http_server(
        settings.PROMETHEUS_BIND_PORT,
        addr=settings.PROMETHEUS_BIND_ADDRESS or "0.0.0.0",  # noqa: S104
    )


@skip_if_prometheus_disabled
def sweep_completed(method: str, duration: float, objective: float):
    sweep_counter.labels(method=method).inc()
    sweep_duration_histogram.labels(method=method).observe(duration)
    objective_gauge.labels(method=method).set(objective)


@skip_if_prometheus_disabled
def accuracy_reported(method: str, scenario: str, k: int, accuracy: float):
    accuracy_gauge.labels(method=method, scenario=scenario, k=str(k)).set(accuracy)
