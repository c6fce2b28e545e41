"""
PLRU（树形伪 LRU）替换策略
年龄的最低位对应根节点箭头，逐位递归；只支持 2 的幂相联度
"""

from ..errors import InvalidAssocError

NAME = 'plru'


def check_assoc(assoc: int) -> None:
    if assoc < 1 or assoc & (assoc - 1):
        raise InvalidAssocError(f"PLRU 要求相联度为 2 的幂，当前为 {assoc}")


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
    base_odd = base & 1
    target_odd = target & 1
    if not base_odd and target_odd:
        return target
    if base_odd and not target_odd:
        return target + 1
    # 根箭头同侧：去掉最低位后在子树里递归
    return 2 * permute(base >> 1, target >> 1)
