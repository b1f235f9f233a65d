"""
Logging configuration that keeps large arrays out of log output
"""

import logging
import sys
from typing import Any

import numpy as np
import torch

MAX_INLINE_ELEMENTS = 16


def summarize_for_logging(data: Any) -> Any:
    """Replace large arrays and tensors with a one-line shape summary"""
    if isinstance(data, torch.Tensor):
        data = data.detach().cpu().numpy()
    if isinstance(data, np.ndarray):
        if data.size <= MAX_INLINE_ELEMENTS:
            return np.array2string(data, precision=4)
        if data.size and np.issubdtype(data.dtype, np.number):
            return (
                f"array(shape={data.shape}, dtype={data.dtype}, "
                f"min={np.nanmin(data):.4g}, max={np.nanmax(data):.4g})"
            )
        return f"array(shape={data.shape}, dtype={data.dtype})"
    if isinstance(data, dict):
        return {key: summarize_for_logging(value) for key, value in data.items()}
    if isinstance(data, (list, tuple)) and len(data) > MAX_INLINE_ELEMENTS:
        return f"{type(data).__name__}(len={len(data)})"
    return data


class SummarizingFormatter(logging.Formatter):
    """Logging formatter that summarises array arguments"""

    def format(self, record):
        if hasattr(record, 'args') and record.args:
            if isinstance(record.args, dict):
                record.args = summarize_for_logging(record.args)
            else:
                record.args = tuple(summarize_for_logging(arg) for arg in record.args)
        return super().format(record)


class SummarizingLogger:
    """Wrapper applying summarize_for_logging to every argument"""

    def __init__(self, name: str):
        self.logger = logging.getLogger(name)

    def _log(self, level: int, message: Any, *args, **kwargs):
        summarized = [summarize_for_logging(arg) for arg in args]
        self.logger.log(level, summarize_for_logging(message), *summarized, **kwargs)

    def info(self, message: Any, *args, **kwargs):
        self._log(logging.INFO, message, *args, **kwargs)

    def warning(self, message: Any, *args, **kwargs):
        self._log(logging.WARNING, message, *args, **kwargs)

    def error(self, message: Any, *args, **kwargs):
        self._log(logging.ERROR, message, *args, **kwargs)

    def debug(self, message: Any, *args, **kwargs):
        self._log(logging.DEBUG, message, *args, **kwargs)

    def critical(self, message: Any, *args, **kwargs):
        self._log(logging.CRITICAL, message, *args, **kwargs)

    def log(self, level: int, message: Any, *args, **kwargs):
        self._log(level, message, *args, **kwargs)


def setup_logging(level: str = "INFO") -> SummarizingLogger:
    """Install one stdout handler with SummarizingFormatter on the root logger"""
    numeric_level = getattr(logging, level.upper(), logging.INFO)

    formatter = SummarizingFormatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    handler = logging.StreamHandler(sys.stdout)
    handler.setFormatter(formatter)

    root_logger = logging.getLogger()
    # Clear any existing handlers to avoid duplicates
    for handler_obj in root_logger.handlers[:]:
        root_logger.removeHandler(handler_obj)

    root_logger.addHandler(handler)
    root_logger.setLevel(numeric_level)

    return SummarizingLogger("beatssl")


def get_logger(name: str) -> SummarizingLogger:
    """Get a summarizing logger instance"""
    return SummarizingLogger(name)
