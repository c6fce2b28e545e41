"""
配置与日志
优先级：CLI 参数 > 环境变量（含 .env 文件） > 默认值
"""

import logging
import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler

from .errors import ConfigError

LOGGER_NAME = 'cache-leak'

DEFAULT_BUDGET_NODES = 10_000_000
DEFAULT_MAX_STATES = 1_000_000
DEFAULT_LOG_LEVEL = 'WARNING'

ENV_BUDGET_NODES = 'CACHELEAK_BUDGET_NODES'
ENV_MAX_STATES = 'CACHELEAK_MAX_STATES'
ENV_LOG_LEVEL = 'CACHELEAK_LOG_LEVEL'


@dataclass(frozen=True)
class Settings:
    """运行时配置"""
    budget_nodes: int = DEFAULT_BUDGET_NODES
    max_states: int = DEFAULT_MAX_STATES
    log_level: str = DEFAULT_LOG_LEVEL


def _positive_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        value = int(raw.strip().replace('_', ''))
    except ValueError:
        raise ConfigError(f"环境变量 {name} 必须是整数，当前值: {raw!r}")
    if value <= 0:
        raise ConfigError(f"环境变量 {name} 必须为正数，当前值: {value}")
    return value


def load_settings(dotenv_path: Optional[str] = None) -> Settings:
    """
    读取 .env 与环境变量

    Args:
        dotenv_path: 指定 .env 路径；为空时按 python-dotenv 的默认规则查找

    Returns:
        Settings 实例

    Raises:
        ConfigError: 环境变量格式错误
    """
    load_dotenv(dotenv_path=dotenv_path, override=False)

    level = os.environ.get(ENV_LOG_LEVEL, DEFAULT_LOG_LEVEL).strip().upper()
    if level not in logging._nameToLevel:
        raise ConfigError(f"环境变量 {ENV_LOG_LEVEL} 不是合法的日志级别: {level!r}")

    return Settings(
        budget_nodes=_positive_int(ENV_BUDGET_NODES, DEFAULT_BUDGET_NODES),
        max_states=_positive_int(ENV_MAX_STATES, DEFAULT_MAX_STATES),
        log_level=level,
    )


def setup_logging(level: str = DEFAULT_LOG_LEVEL) -> logging.Logger:
    """配置 cache-leak 日志（输出到 stderr，stdout 只留给数据）"""
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(level)
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(console=Console(stderr=True), show_path=False, markup=False)
        handler.setFormatter(logging.Formatter('%(message)s'))
        logger.addHandler(handler)
    logger.propagate = False
    return logger


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(f'{LOGGER_NAME}.{name}')
