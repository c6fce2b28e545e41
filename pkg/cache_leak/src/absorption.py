"""
信息吸收量：受害者计算能把多少种状态写进一个缓存组
闭式解（满/空初始状态）、PLRU 的 Λ 配置数递归、以及可达状态穷举作为对照
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from . import cache_core
from .cache_core import Policy
from .config import get_logger
from .errors import CacheLeakError, OutOfRangeError
from .statesets import InitialStatus, victim_states

logger = get_logger('absorption')


@dataclass(frozen=True)
class CountResult:
    """状态数及其比特数 log₂(count)"""
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise CacheLeakError(f"计数必须 ≥ 1，当前为 {self.count}")

    @property
    def bits(self) -> float:
        return math.log2(self.count)


@dataclass(frozen=True)
class AbsorptionQuery:
    policy: Policy
    assoc: int
    footprint: int
    initial: InitialStatus = InitialStatus.FILLED

    def __post_init__(self):
        object.__setattr__(self, 'policy', Policy.parse(self.policy))
        object.__setattr__(self, 'initial', InitialStatus(self.initial))
        _check(self.policy, self.assoc, self.footprint)


def _check(policy: Policy, assoc: int, fp: int) -> Policy:
    policy = Policy.parse(policy)
    cache_core.check_assoc(policy, assoc)
    if not isinstance(fp, int) or fp < 0:
        raise CacheLeakError(f"footprint 必须是非负整数，当前为 {fp!r}")
    return policy


def absorb_filled(policy: Policy, assoc: int, fp: int) -> CountResult:
    """从满状态出发、访问 fp 个受害者块后可达的状态数"""
    policy = _check(policy, assoc, fp)
    if fp > assoc + 1 or (fp == assoc + 1 and policy is not Policy.FIFO):
        return CountResult(math.perm(fp, assoc))

    if policy is Policy.LRU:
        return CountResult(math.perm(fp, min(fp, assoc)))
    if policy is Policy.FIFO:
        # 全部命中时 FIFO 不改变年龄
        return CountResult(assoc + 1 if fp == assoc + 1 else 1)
    if fp == 0:
        return CountResult(1)
    return CountResult(2 ** (fp - 1))


@lru_cache(maxsize=None)
def lambda_plru(k: int, assoc: int) -> int:
    """
    PLRU 下恰有 k 个占位符（匿名化的受害者块）的可达配置数

    把 k 个占位符分到根节点的两棵子树（每棵至少 1 个、至多 A/2 个），
    子树递归计数；根箭头的两个方向各对应一种配置，所以乘 2

    Raises:
        OutOfRangeError: k 不在 0..A
        InvalidAssocError: A 不是 2 的幂
    """
    cache_core.check_assoc(Policy.PLRU, assoc)
    if not 0 <= k <= assoc:
        raise OutOfRangeError(f"占位符数 k={k} 不在 0..{assoc}")
    if k <= 1 or k == assoc:
        return 1
    half = assoc // 2
    return 2 * sum(lambda_plru(i, half) * lambda_plru(k - i, half)
                   for i in range(max(1, k - half), min(half, k - 1) + 1))


def configuration_count(policy: Policy, k: int, assoc: int) -> int:
    """Λ_policy(k, A)；LRU 与 FIFO 恒为 1（占位符总在最年轻的 k 个年龄上）"""
    policy = Policy.parse(policy)
    if policy is Policy.PLRU:
        return lambda_plru(k, assoc)
    cache_core.check_assoc(policy, assoc)
    if not 0 <= k <= assoc:
        raise OutOfRangeError(f"占位符数 k={k} 不在 0..{assoc}")
    return 1


def absorb_empty(policy: Policy, assoc: int, fp: int) -> CountResult:
    """从空状态出发的可达状态数：Σ_k Λ(k, A) · fp!/(fp-k)!"""
    policy = _check(policy, assoc, fp)
    total = sum(configuration_count(policy, k, assoc) * math.perm(fp, k)
                for k in range(min(fp, assoc) + 1))
    return CountResult(total)


def absorb(query: AbsorptionQuery) -> CountResult:
    if query.initial is InitialStatus.FILLED:
        result = absorb_filled(query.policy, query.assoc, query.footprint)
    else:
        result = absorb_empty(query.policy, query.assoc, query.footprint)
    logger.debug("吸收量 %s A=%d fp=%d %s → %d", query.policy.value, query.assoc,
                 query.footprint, query.initial.value, result.count)
    return result


def oracle_count(query: AbsorptionQuery, max_states: Optional[int] = None) -> CountResult:
    """穷举可达状态集得到的吸收量，用来核对闭式解"""
    states = victim_states(query.policy, query.assoc, query.footprint, query.initial,
                           max_states=max_states)
    return CountResult(len(states))
