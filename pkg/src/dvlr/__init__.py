"""Dual variable learning rates (DVLR) for small neural networks.

Two learning rates are kept, one applied to batches the network mostly gets
right and one to batches it mostly gets wrong; each can drift by a constant
step after a randomly drawn number of correct (or incorrect) responses.
"""

from .errors import (ConfigError, DataError, DimensionError, DVLRError, FormatError,
                     InternalError, ParseError)
from .notation import format_schedule_spec, parse_schedule_spec
from .scheduler import (BatchOutcome, DualRateConfig, RateSchedule, SchedulerState,
                        current_rates, export_trace, new_scheduler, record_responses,
                        select_rate)

__version__ = "0.1.0"

__all__ = [
    "BatchOutcome", "ConfigError", "DataError", "DimensionError", "DualRateConfig",
    "DVLRError", "FormatError", "InternalError", "ParseError", "RateSchedule",
    "SchedulerState", "current_rates", "export_trace", "format_schedule_spec",
    "new_scheduler", "parse_schedule_spec", "record_responses", "select_rate",
]
