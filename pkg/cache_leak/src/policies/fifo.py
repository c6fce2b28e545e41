"""
FIFO 替换策略
命中时不改变任何年龄（恒等置换）
"""

NAME = 'fifo'


def check_assoc(assoc: int) -> None:
    """FIFO 对相联度没有额外要求"""


def permute(base: int, target: int) -> int:
    return target
