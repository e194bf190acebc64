from ._sepoa import (
    ConfigError,
    bt_probability,
    default_config,
    matchrate,
    mc_disagreement,
    parse_config,
    probit_variance,
    run,
)

__all__ = [
    "ConfigError",
    "bt_probability",
    "default_config",
    "matchrate",
    "mc_disagreement",
    "parse_config",
    "probit_variance",
    "run",
]
