"""Exact i.i.d. sampling from continuous targets through ellipsoidal shells."""

import json

from ._core import (
    IidshellError,
    h_apply,
    h_invert,
    log_abs_det_grad_h,
    preset_names,
    preset_text,
    run,
    sample_standard,
    version,
)

__version__ = version()


def preset_config(name):
    """The shipped preset as a dict."""
    return json.loads(preset_text(name))


__all__ = [
    "IidshellError",
    "h_apply",
    "h_invert",
    "log_abs_det_grad_h",
    "preset_config",
    "preset_names",
    "run",
    "sample_standard",
    "__version__",
]
