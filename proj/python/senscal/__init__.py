# SPDX-License-Identifier: Apache-2.0
"""Self-supervised calibration of low-cost air-quality sensors."""

from ._senscal import (
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    Error,
    FormatError,
    NumericError,
    ParameterError,
    RunConfig,
    __version__,
    config_keys,
    load_report,
    make_chunks,
    mlr_fit,
    r2,
    relative_improvement,
    rmse,
    run_command,
    synth_generate,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DataError",
    "DimensionError",
    "Error",
    "FormatError",
    "NumericError",
    "ParameterError",
    "RunConfig",
    "__version__",
    "config_keys",
    "load_report",
    "make_chunks",
    "mlr_fit",
    "r2",
    "relative_improvement",
    "rmse",
    "run",
    "run_command",
    "synth_generate",
]


def run(command, config=None, **kwargs):
    """Runs a pipeline command.

    `config` is a RunConfig or a mapping of "section.key" to value. Returns a
    dict with the output paths, the manifest path and the command log.
    """
    if config is None:
        config = RunConfig()
    elif not isinstance(config, RunConfig):
        cfg = RunConfig()
        for key, value in dict(config).items():
            cfg.set(key, str(value))
        config = cfg
    outputs, manifest, log = run_command(command, config, **kwargs)
    return {"outputs": outputs, "manifest": manifest, "log": log}
