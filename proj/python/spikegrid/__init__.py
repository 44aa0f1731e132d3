"""Python surface of the spiking-network engine.

The heavy lifting lives in the compiled ``_core`` module; this package
re-exports it under stable names.
"""

from ._core import (
    ConfigError,
    SpikegridError,
    conv2d,
    events_to_frames,
    forward,
    lif_sequence,
    param_count,
    poisson_encode,
    soft_spike,
    surrogate,
)

__all__ = [
    "ConfigError",
    "SpikegridError",
    "conv2d",
    "events_to_frames",
    "forward",
    "lif_sequence",
    "param_count",
    "poisson_encode",
    "soft_spike",
    "surrogate",
]
