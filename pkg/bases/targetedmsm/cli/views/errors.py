import functools
import json
import sys
import typing as T

import click

from targetedmsm.util.errors import REPORTED, error_document


def reported(command: T.Callable) -> T.Callable:
    """turns engine, precondition and linear algebra failures into error JSON on stderr and exit status 1"""

    @functools.wraps(command)
    def wrapper(*args: T.Any, **kwargs: T.Any) -> T.Any:
        try:
            return command(*args, **kwargs)
        except REPORTED as e:
            click.echo(json.dumps(error_document(e), sort_keys=True), err=True)
            sys.exit(1)

    return wrapper
