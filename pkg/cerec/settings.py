import json
import logging.config
import os
from io import StringIO
from pathlib import Path
from typing import Any

from platformdirs import user_config_dir

from cerec.appconfig import Config

CONFIG_MAPPING = {
    "debug": {"section": "cerec", "option": "debug", "type": "boolean"},
    "worker_threads": {
        "section": "training",
        "option": "worker_threads",
        "type": "int",
    },
    "batch_size": {"section": "training", "option": "batch_size", "type": "int"},
    "early_stop_tolerance": {
        "section": "training",
        "option": "early_stop_tolerance",
        "type": "optional_float",
    },
    "fusion_normalize": {
        "section": "evaluation",
        "option": "fusion_normalize",
        "type": "boolean",
    },
    "validation_k": {"section": "evaluation", "option": "validation_k", "type": "int"},
    "prometheus_bind_address": {
        "section": "prometheus",
        "option": "prometheus_bind_address",
        "type": "string",
    },
    "prometheus_bind_port": {
        "section": "prometheus",
        "option": "prometheus_bind_port",
        "type": "optional_int",
    },
}


CONFIG_DEFAULTS = """[cerec]

debug = False

[training]

worker_threads = 1
batch_size = 256
early_stop_tolerance =

[evaluation]

fusion_normalize = False
validation_k = 30

[prometheus]

prometheus_bind_address =
prometheus_bind_port =
"""


def get_config_dir() -> Path:
    return Path(user_config_dir("cerec"))


CONFIG_FILES = ["/etc/cerec/cerec.cfg", str(get_config_dir() / "cerec.cfg")]


config = Config(env_prefix="CEREC", attrs=CONFIG_MAPPING)
config.read_defaults(StringIO(CONFIG_DEFAULTS))
config.read_files(CONFIG_FILES)


DEBUG = config.get("debug")

WORKER_THREADS = config.get("worker_threads")
BATCH_SIZE = config.get("batch_size")
EARLY_STOP_TOLERANCE = config.get("early_stop_tolerance")

FUSION_NORMALIZE = config.get("fusion_normalize")
VALIDATION_K = config.get("validation_k")


# Logging

# Location of the logging configuration file that we're going to pass to
# `logging.config.dictConfig` unless it doesn't exist.
LOGGING_CONFIG_FILE = "/etc/cerec/logging.json"

LOGGING: dict[str, Any] = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "detailed": {
            "format": "%(levelname)-8s <%(asctime)s>: %(message)s",
            "datefmt": "%Y-%m-%d %H:%M:%S",
        }
    },
    "handlers": {
        "console": {
            "level": "INFO",
            "class": "logging.StreamHandler",
            "formatter": "detailed",
        }
    },
    "loggers": {"cerec": {"level": "INFO"}},
    "root": {"handlers": ["console"], "level": "WARNING"},
}

if DEBUG:
    LOGGING["formatters"]["detailed"]["format"] = (
        "%(levelname)-8s <%(process)d:%(threadName)s> <%(asctime)s> %(module)s:%(funcName)s:%(lineno)d: %(message)s"
    )
    LOGGING["handlers"]["console"]["level"] = "DEBUG"
    LOGGING["loggers"] = {"cerec": {"level": "DEBUG"}}


def configure_logging():
    if os.path.isfile(LOGGING_CONFIG_FILE):
        with open(LOGGING_CONFIG_FILE) as f:
            logging.config.dictConfig(json.load(f))
    else:
        logging.config.dictConfig(LOGGING)


# Prometheus

PROMETHEUS_BIND_ADDRESS = config.get("prometheus_bind_address")
PROMETHEUS_BIND_PORT = config.get("prometheus_bind_port")
PROMETHEUS_ENABLED = PROMETHEUS_BIND_PORT is not None
