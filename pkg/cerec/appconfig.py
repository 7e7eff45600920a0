"""
Configuration helper.

Configuration attributes are declared in ``cerec.settings`` as a mapping of
attribute names to a dictionary indicating the 'section', 'option' and 'type'
to be parsed by the ``Config`` class, e.g.::

    {"worker_threads": {"section": "cerec", "option": "worker_threads", "type": "int"}}

Supported types are ``string``, ``int``, ``float``, ``boolean`` and the
``optional_int`` / ``optional_float`` variants, which read an empty value as
``None`` (used for switches such as the Prometheus port or early stopping).
"""

import configparser
import functools
import os
from collections.abc import Mapping
from typing import Any


class ImproperlyConfigured(Exception):
    """The configuration is incomplete or refers to unknown attributes."""


def fallback_option(fn):
    def wrapper(*args, **kwargs):
        fallback = kwargs.pop("fallback", None)
        try:
            return fn(*args, **kwargs)
        except (configparser.NoSectionError, configparser.NoOptionError):
            if fallback is not None:
                return fallback
            raise

    return functools.wraps(fn)(wrapper)


class EnvConfigParser(configparser.ConfigParser):
    """
    EnvConfigParser enables the user to provide configuration values using
    the string environment, e.g. given:

      - String environment prefix (prefix) = "CEREC"
      - Configuration section: "training"
      - Configuration option: "worker_threads"

    This parser will first try to find the configuration value in the string
    environment matching one of the two following keys:

      - CEREC_TRAINING_WORKER_THREADS
      - CEREC_WORKER_THREADS

    If the variable is not set in the string environment the reader falls back
    on the configuration files. A variable set to the empty string is honoured,
    so ``CEREC_PROMETHEUS_BIND_PORT=`` disables the exporter even when a
    configuration file enables it.

    The getters accept a ``fallback`` keyword that is returned instead of an
    exception when the section or option are undefined.
    """

    ENVVAR_SEPARATOR = "_"

    def __init__(self, defaults=None, env: Mapping[str, str] | None = None, prefix=""):
        self._environ = env if env is not None else os.environ
        self._prefix = prefix.rstrip(self.ENVVAR_SEPARATOR)
        super().__init__(defaults, inline_comment_prefixes=(";",))

    def _get_envvar(self, section: str, option: str) -> str | None:
        for key in (
            self.ENVVAR_SEPARATOR.join([self._prefix, section, option]).upper(),
            self.ENVVAR_SEPARATOR.join([self._prefix, option]).upper(),
        ):
            if key in self._environ:
                return self._environ[key]
        return None

    @fallback_option
    def get(self, section, option, **kwargs):
        ret = self._get_envvar(section, option)
        if ret is not None:
            return ret
        return super().get(section, option, **kwargs)

    @fallback_option
    def getint(self, *args, **kwargs):
        return super().getint(*args, **kwargs)

    @fallback_option
    def getfloat(self, *args, **kwargs):
        return super().getfloat(*args, **kwargs)

    @fallback_option
    def getboolean(self, *args, **kwargs):
        return super().getboolean(*args, **kwargs)

    def getoptional_int(self, section, option, **kwargs) -> int | None:
        value = self.get(section, option, **kwargs)
        return int(value) if str(value).strip() else None

    def getoptional_float(self, section, option, **kwargs) -> float | None:
        value = self.get(section, option, **kwargs)
        return float(value) if str(value).strip() else None


class Config:
    """EnvConfigParser wrapper resolving declared attributes."""

    TYPES = ("string", "int", "float", "boolean", "optional_int", "optional_float")

    INVALID_ATTR_MSG = (
        "Invalid attribute: %s. Make sure the entry in the"
        " attribute has all the fields needed (section, option,"
        " type) and a supported type."
    )

    UNDEFINED_ATTR_MSG = "The following configuration attribute must be defined: %s."

    def __init__(self, env_prefix: str, attrs: Mapping[str, Mapping[str, Any]], env=None):
        self.config = EnvConfigParser(env=env, prefix=env_prefix)
        self.attrs = attrs

    def read_defaults(self, fp):
        self.config.read_file(fp)

    def read_files(self, files):
        self.config.read(files)

    def get(self, attr: str, default=None):
        if attr not in self.attrs:
            raise ImproperlyConfigured(
                "Unknown attribute: %s. Make sure the "
                "attribute has been included in the "
                "attribute list." % attr
            )

        attr_opts = self.attrs[attr]
        if not all(k in attr_opts for k in ("section", "option", "type")):
            raise ImproperlyConfigured(self.INVALID_ATTR_MSG % attr)
        if attr_opts["type"] not in self.TYPES:
            raise ImproperlyConfigured(self.INVALID_ATTR_MSG % attr)

        getter = "get{}".format(
            "" if attr_opts["type"] == "string" else attr_opts["type"]
        )
        kwargs = {"section": attr_opts["section"], "option": attr_opts["option"]}
        if default is not None:
            kwargs["fallback"] = default
        elif "default" in attr_opts:
            kwargs["fallback"] = attr_opts["default"]

        try:
            return getattr(self.config, getter)(**kwargs)
        except (configparser.NoSectionError, configparser.NoOptionError):
            raise ImproperlyConfigured(self.UNDEFINED_ATTR_MSG % attr)
        except ValueError as err:
            raise ImproperlyConfigured(
                f"Attribute {attr} is not a valid {attr_opts['type']}: {err}"
            ) from err
