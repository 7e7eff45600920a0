import logging

import click

from cerec import settings
from cerec.core import ContractError
from cerec.core import DataError
from cerec.core import NumericalError
from cerec.core import ParameterError
from cerec.core import ShapeError
from cerec.metrics import start_prometheus_server

logger = logging.getLogger(__name__)

EXIT_ARGUMENT = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


class CommandError(click.ClickException):
    """A library error reported as ``Error: ...`` with its own exit status."""

    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


def exit_code_for(err: BaseException) -> int | None:
    """Exit status of an error raised by a command, None if unexpected."""
    if isinstance(err, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(err, ParameterError):
        return EXIT_ARGUMENT
    if isinstance(err, DataError | ShapeError | ContractError | IndexError | OSError):
        return EXIT_DATA
    return None


class CerecGroup(click.Group):
    """Translates library errors into exit statuses."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.ClickException:
            raise
        except Exception as err:
            code = exit_code_for(err)
            if code is None:
                raise
            logger.debug("Command failed", exc_info=True)
            raise CommandError(str(err), code) from err


def init_cli():
    settings.configure_logging()
    start_prometheus_server()


class IntList(click.ParamType):
    """Comma-separated positive integers, e.g. ``5,10,15``."""

    name = "ints"

    def convert(self, value, param, ctx):
        if isinstance(value, tuple):
            return value
        try:
            values = tuple(int(v) for v in str(value).split(","))
        except ValueError:
            self.fail(f"{value!r} is not a comma-separated list of integers", param, ctx)
        if min(values) < 1:
            self.fail("values must be positive", param, ctx)
        return values


class FloatList(click.ParamType):
    name = "floats"

    def convert(self, value, param, ctx):
        if isinstance(value, tuple):
            return value
        try:
            return tuple(float(v) for v in str(value).split(","))
        except ValueError:
            self.fail(f"{value!r} is not a comma-separated list of numbers", param, ctx)
