"""
信息提取量：自适应探测攻击者最多能把受害者可能状态划分成多少个知识集
核心功能：
- max_leakage: 递归搜索所有探测策略（最终知识集 + 标记集去冗余 + 记忆化）
- leakage_bound: 与 footprint 无关（或只依赖 Λ）的解析上界
- 确定性年龄、成功概率上界、多缓存组组合
"""

import math
import sys
import time
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import (Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union)

from . import cache_core
from .absorption import lambda_plru
from .cache_core import Block, CacheSetState, Policy, block_key
from .config import DEFAULT_BUDGET_NODES, get_logger
from .errors import (BudgetExceededError, CacheLeakError, InsufficientBlocksError,
                     InvalidProbabilityError, InvariantViolationError)
from .mealy import Input, MealyMachine, Output, Probe, State, split
from .statesets import BlockUniverse

logger = get_logger('extraction')

DEFAULT_MAX_DEPTH = 500


class AttackerKind(str, Enum):
    """共享内存攻击者可以访问受害者的块；不相交攻击者不能"""
    SHARED = 'shared'
    DISJOINT = 'disjoint'


def attacker_alphabet(kind: AttackerKind, universe: BlockUniverse, assoc: int,
                      include_fillers: bool = False) -> Tuple[Block, ...]:
    """
    攻击者的探测字母表

    shared: B_v ∪ {A 个新鲜探测块}；disjoint: {A 个新鲜探测块}
    include_fillers 为真时追加填充块（填充块本来就属于攻击者）

    Raises:
        InsufficientBlocksError: 新鲜探测块少于 A 个
    """
    kind = AttackerKind(kind)
    if len(universe.probe_blocks) < assoc:
        raise InsufficientBlocksError(
            f"需要 {assoc} 个新鲜探测块，当前只有 {len(universe.probe_blocks)} 个")
    alphabet = list(universe.probe_blocks)
    if kind is AttackerKind.SHARED:
        alphabet += universe.victim_blocks
    if include_fillers:
        alphabet += universe.filler_blocks
    return tuple(sorted(alphabet, key=block_key))


@dataclass(frozen=True)
class AttackerModel:
    kind: AttackerKind
    alphabet: Tuple[Block, ...]
    victim_blocks: Tuple[Block, ...]

    def __post_init__(self):
        object.__setattr__(self, 'kind', AttackerKind(self.kind))
        victims = set(self.victim_blocks)
        if self.kind is AttackerKind.SHARED and not victims <= set(self.alphabet):
            raise InvariantViolationError("共享内存攻击者的字母表必须包含全部受害者块")
        if self.kind is AttackerKind.DISJOINT and victims & set(self.alphabet):
            raise InvariantViolationError("不相交攻击者的字母表不能包含受害者块")

    @classmethod
    def build(cls, kind: AttackerKind, universe: BlockUniverse, assoc: int,
              include_fillers: bool = False) -> 'AttackerModel':
        return cls(AttackerKind(kind), attacker_alphabet(kind, universe, assoc, include_fillers),
                   universe.victim_blocks)


@dataclass(frozen=True)
class SearchLimits:
    """搜索预算；None 表示不限制"""
    max_nodes: Optional[int] = DEFAULT_BUDGET_NODES
    max_depth: Optional[int] = DEFAULT_MAX_DEPTH
    max_seconds: Optional[float] = None

    def __post_init__(self):
        for name in ('max_nodes', 'max_depth', 'max_seconds'):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise CacheLeakError(f"{name} 必须为正数，当前为 {value}")

    @classmethod
    def for_cache(cls, assoc: int, footprint: int, max_nodes: Optional[int] = DEFAULT_BUDGET_NODES,
                  max_seconds: Optional[float] = None) -> 'SearchLimits':
        """缓存组的默认探测深度预算 4·A·(fp+1)"""
        return cls(max_nodes, 4 * assoc * (footprint + 1), max_seconds)


@dataclass
class StrategyNode:
    """策略树节点：本步输入 + 按观察值索引的子树（None 为叶子）"""
    input: Input
    children: Dict[Output, Optional['StrategyNode']] = field(default_factory=dict)

    @property
    def depth(self) -> int:
        return 1 + max((c.depth for c in self.children.values() if c is not None), default=0)

    @property
    def leaves(self) -> int:
        return sum(1 if c is None else c.leaves for c in self.children.values())

    def to_json(self) -> Dict:
        return {
            'input': _plain(self.input),
            'children': {str(_plain(obs)): (None if child is None else child.to_json())
                         for obs, child in self.children.items()},
        }


def _plain(value):
    return value.value if isinstance(value, Enum) else value


@dataclass(frozen=True)
class PartitionResult:
    r_max: int
    exact: bool
    nodes: int
    depth: int
    alphabet: Tuple[Input, ...]
    runtime: float
    witness: Optional[StrategyNode] = None

    @property
    def bits(self) -> float:
        return math.log2(self.r_max)


class _PartitionSearch:
    """
    递归划分搜索

    集合 S 已在标记集中（之前未细化的输入又回到它）或 |S| ≤ 1 时返回 1；
    否则逐个尝试输入：按观察值分组、更新、递归，取各组结果之和的最大值
    未细化（只有一种观察）的输入把 S 加入子调用的标记集，细化的输入清空标记集
    """

    def __init__(self, machine: MealyMachine, alphabet: Sequence[Input],
                 limits: SearchLimits, witness: bool):
        self.machine = machine
        self.alphabet = tuple(alphabet)
        self.limits = limits
        self.witness = witness
        # 空标记集下的结果只取决于 S，在任意上下文中都可复用
        self.exact_memo: Dict[FrozenSet[State], Tuple[int, Optional[StrategyNode]]] = {}
        # 非空标记集下按 S 记忆（标记集只区分空与非空）
        self.context_memo: Dict[FrozenSet[State], Tuple[int, Optional[StrategyNode]]] = {}
        self.nodes = 0
        self.deepest = 0
        self.truncations = 0
        self.deadline = (time.monotonic() + limits.max_seconds) if limits.max_seconds else None

    def _exhausted(self, depth: int) -> bool:
        limits = self.limits
        if limits.max_depth is not None and depth > limits.max_depth:
            return True
        if limits.max_nodes is not None and self.nodes > limits.max_nodes:
            return True
        if self.deadline is not None and self.nodes % 1024 == 0 and time.monotonic() > self.deadline:
            return True
        return False

    def partition(self, states: FrozenSet[State], flags: FrozenSet[FrozenSet[State]],
                  depth: int) -> Tuple[int, Optional[StrategyNode]]:
        if len(states) <= 1 or states in flags:
            return 1, None
        if states in self.exact_memo:
            return self.exact_memo[states]
        if flags and states in self.context_memo:
            return self.context_memo[states]

        self.nodes += 1
        self.deepest = max(self.deepest, depth)
        if self._exhausted(depth):
            self.truncations += 1
            return 1, None

        truncations_before = self.truncations
        best, best_node = 1, None
        size = len(states)
        for symbol in self.alphabet:
            if best == size:
                break
            groups = split(self.machine, states, symbol)
            images = [frozenset(self.machine.upd(s, symbol) for s in group)
                      for group in groups.values()]
            # 每组最多贡献 |像| 个知识集
            if sum(len(image) for image in images) <= best:
                continue
            child_flags = flags | {states} if len(groups) == 1 else frozenset()
            total, children = 0, {}
            for obs, image in zip(groups, images):
                count, node = self.partition(image, child_flags, depth + 1)
                total += count
                children[obs] = node
            if total > best:
                best = total
                best_node = StrategyNode(symbol, children) if self.witness else None

        result = (best, best_node)
        if self.truncations == truncations_before:
            if flags:
                self.context_memo[states] = result
            else:
                self.exact_memo[states] = result
        return result


def max_leakage(machine: MealyMachine, possible: Iterable[State], alphabet: Optional[Iterable[Input]] = None,
                limits: Optional[SearchLimits] = None, witness: bool = False,
                strict: bool = False) -> PartitionResult:
    """
    计算最大信息泄露 r_max：所有探测策略中知识集数量的最大值

    Args:
        machine: Mealy 机
        possible: 受害者可能的初始状态集 S_v（非空）
        alphabet: 攻击者输入字母表，默认使用 machine.inputs
        limits: 搜索预算；耗尽时结果标记为 exact=False（下界）
        witness: 是否返回达到 r_max 的策略树
        strict: 预算耗尽时抛出 BudgetExceededError

    Raises:
        CacheLeakError: 状态集或字母表为空
        UnknownInputError: 字母表中有机器不接受的输入
        BudgetExceededError: strict 模式下预算耗尽
    """
    states = frozenset(getattr(possible, 'states', possible))
    if not states:
        raise CacheLeakError("可能状态集不能为空")
    alphabet = tuple(machine.inputs if alphabet is None else alphabet)
    if not alphabet:
        raise CacheLeakError("攻击者字母表不能为空")
    for symbol in alphabet:
        machine.check_input(symbol)
    limits = limits or SearchLimits()

    if limits.max_depth is not None:
        needed = 3 * limits.max_depth + 200
        if sys.getrecursionlimit() < needed:
            sys.setrecursionlimit(needed)

    started = time.perf_counter()
    search = _PartitionSearch(machine, alphabet, limits, witness)
    r_max, node = search.partition(states, frozenset(), 0)
    runtime = time.perf_counter() - started
    # r_max = |S| 已是上限，截断的分支不可能再改进
    exact = search.truncations == 0 or r_max == len(states)

    logger.info("r_max=%d (|S|=%d, |Σ|=%d) 节点 %d 深度 %d 用时 %.3fs%s", r_max, len(states),
                len(alphabet), search.nodes, search.deepest, runtime,
                '' if exact else ' [预算耗尽，结果为下界]')
    if not exact:
        logger.warning("搜索预算耗尽 %d 次，r_max=%d 只是下界", search.truncations, r_max)
        if strict:
            raise BudgetExceededError(f"搜索预算耗尽，已知下界 r_max ≥ {r_max}", lower_bound=r_max)
    if r_max > len(states):
        raise InvariantViolationError(f"r_max={r_max} 超过了状态数 {len(states)}")

    return PartitionResult(r_max=r_max, exact=exact, nodes=search.nodes, depth=search.deepest,
                           alphabet=alphabet, runtime=runtime, witness=node)


@dataclass(frozen=True)
class Leaf:
    """策略树的一个叶子：探测、知识集 K(p)、最终知识集 FK(p)"""
    probe: Probe
    knowledge: FrozenSet[State]
    final: FrozenSet[State]


def leaf_partition(machine: MealyMachine, possible: Iterable[State],
                   tree: Optional[StrategyNode]) -> List[Leaf]:
    """按策略树回放每个初始状态，得到叶子知识集（按首次出现顺序）"""
    leaves: Dict[Probe, Tuple[List[State], List[State]]] = {}
    for start in getattr(possible, 'states', possible):
        state, probe, node = start, Probe(), tree
        while node is not None:
            obs = machine.view(state, node.input)
            state = machine.upd(state, node.input)
            probe = probe.extend(node.input, obs)
            if obs not in node.children:
                raise InvariantViolationError(f"策略树在 {probe.steps} 处缺少观察 {obs!r} 的分支")
            node = node.children[obs]
        knowledge, final = leaves.setdefault(probe, ([], []))
        knowledge.append(start)
        final.append(state)
    return [Leaf(probe, frozenset(k), frozenset(f)) for probe, (k, f) in leaves.items()]


# ========== 解析上界 ==========

@dataclass(frozen=True)
class LeakageBound:
    """提取量上界；trivial 表示没有与 footprint 无关的有限上界，count 退化为 |S_v|"""
    count: Optional[int]
    trivial: bool = False

    @property
    def bits(self) -> Optional[float]:
        return None if self.count is None else math.log2(self.count)

    def admits(self, value: int) -> bool:
        return self.count is None or value <= self.count


def leakage_bound(policy: Policy, assoc: int, kind: AttackerKind, fp: Optional[int] = None,
                  possible_size: Optional[int] = None) -> LeakageBound:
    """
    共享 LRU: 2^A；共享 FIFO: (A+1)!；不相交 LRU/FIFO: A+1；
    不相交 PLRU: Σ_{k=0}^{min(fp,A)} Λ(k, A)；共享 PLRU: 平凡上界 |S_v|

    Raises:
        InvalidAssocError: 配置不合法
        CacheLeakError: 不相交 PLRU 缺少 footprint
    """
    policy = Policy.parse(policy)
    kind = AttackerKind(kind)
    cache_core.check_assoc(policy, assoc)

    if kind is AttackerKind.SHARED:
        if policy is Policy.LRU:
            return LeakageBound(2 ** assoc)
        if policy is Policy.FIFO:
            return LeakageBound(math.factorial(assoc + 1))
        return LeakageBound(possible_size, trivial=True)

    if policy is not Policy.PLRU:
        return LeakageBound(assoc + 1)
    if fp is None or fp < 0:
        raise CacheLeakError("不相交 PLRU 上界需要非负的 footprint")
    return LeakageBound(sum(lambda_plru(k, assoc) for k in range(min(fp, assoc) + 1)))


def deterministic_ages(final: Iterable[CacheSetState]) -> int:
    """
    确定性年龄数：最大的 n，使得存在块序列 a_0..a_{n-1}，在每个状态中 a_i 的年龄都是 i

    Raises:
        CacheLeakError: 状态集为空
        InvariantViolationError: 状态的相联度或块全集不一致
    """
    states = list(getattr(final, 'states', final))
    if not states:
        raise CacheLeakError("状态集不能为空")
    first = states[0]
    for state in states[1:]:
        if state.assoc != first.assoc or state.universe != first.universe:
            raise InvariantViolationError("状态的相联度或块全集不一致")
    count = 0
    for age in range(first.assoc):
        if any(state.lines[age] != first.lines[age] for state in states):
            break
        count += 1
    return count


Probability = Union[float, Fraction]


def success_probability_bound(max_prior: Probability, channel_count: int) -> Probability:
    """
    攻击成功概率上界 min(1, max_prior × channel_count)

    Args:
        max_prior: 秘密的最大先验概率
        channel_count: 观察值个数（例如 r_max）

    Raises:
        InvalidProbabilityError: max_prior 不在 (0, 1] 或 channel_count < 1
    """
    if not 0 < max_prior <= 1:
        raise InvalidProbabilityError(f"先验概率必须在 (0, 1] 内，当前为 {max_prior}")
    if not isinstance(channel_count, int) or channel_count < 1:
        raise InvalidProbabilityError(f"通道输出数必须是正整数，当前为 {channel_count!r}")
    bound = max_prior * channel_count
    if bound >= 1:
        return Fraction(1) if isinstance(max_prior, Fraction) else 1.0
    return bound


def compose_sets(per_set_counts: Sequence[int]) -> int:
    """各缓存组独立时，整体知识集数是各组之积（比特数相加）"""
    counts = list(per_set_counts)
    if not counts:
        raise CacheLeakError("至少需要一个缓存组的计数")
    for count in counts:
        if not isinstance(count, int) or count < 1:
            raise CacheLeakError(f"计数必须是正整数，当前为 {count!r}")
    return math.prod(counts)
