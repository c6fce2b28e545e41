"""
LRU 替换策略
命中块的年龄置 0，比它年轻的块各老一岁，更老的块不变
"""

NAME = 'lru'


def check_assoc(assoc: int) -> None:
    """LRU 对相联度没有额外要求"""


def permute(base: int, target: int) -> int:
    """
    Args:
        base: 被命中块的年龄
        target: 待重排块的当前年龄

    Returns:
        target 块的新年龄
    """
    if target == base:
        return 0
    if target < base:
        return target + 1
    return target
