"""
单个缓存组的确定性模型（Mealy 机）
核心功能：替换策略置换函数、更新函数 upd、观察函数 view
"""

import importlib
import os
import re
from enum import Enum
from functools import lru_cache
from types import ModuleType
from typing import Dict, FrozenSet, Iterable, List, Mapping, Tuple

from .config import get_logger
from .errors import (CacheLeakError, InvalidAgeError, InvalidAssocError, InvariantViolationError,
                     UnknownBlockError)

logger = get_logger('cache_core')

# 内存块标识：不透明字符串，按自然序比较（b2 < b10）
Block = str


class Policy(str, Enum):
    """置换型替换策略"""
    FIFO = 'fifo'
    LRU = 'lru'
    PLRU = 'plru'

    @classmethod
    def parse(cls, value) -> 'Policy':
        if isinstance(value, Policy):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise CacheLeakError(f"未知替换策略: {value!r}") from None


class Observation(str, Enum):
    """缓存命中 (H) / 缺失 (M)"""
    HIT = 'H'
    MISS = 'M'


def block_key(block: Block) -> Tuple:
    """自然排序键：把数字段按整数比较"""
    return tuple(int(part) if part.isdigit() else part
                 for part in re.split(r'(\d+)', str(block)))


def _load_policies() -> Dict[str, ModuleType]:
    """动态加载 policies 目录下的所有替换策略"""
    registry = {}
    policies_dir = os.path.join(os.path.dirname(__file__), 'policies')
    package = __name__.rsplit('.', 1)[0] + '.policies'

    for filename in sorted(os.listdir(policies_dir)):
        if not filename.endswith('.py') or filename == '__init__.py':
            continue
        module = importlib.import_module(f'{package}.{filename[:-3]}')
        if not all(hasattr(module, attr) for attr in ('NAME', 'permute', 'check_assoc')):
            logger.warning("策略模块 %s 缺少 NAME/permute/check_assoc，已跳过", filename)
            continue
        registry[module.NAME] = module
        logger.debug("加载替换策略: %s", module.NAME)
    return registry


_POLICIES = _load_policies()


def _policy_module(policy: Policy) -> ModuleType:
    policy = Policy.parse(policy)
    try:
        return _POLICIES[policy.value]
    except KeyError:
        raise InvalidAssocError(f"替换策略 {policy.value} 没有对应的实现模块") from None


def check_assoc(policy: Policy, assoc: int) -> None:
    """检查 (策略, 相联度) 组合是否合法"""
    if not isinstance(assoc, int) or assoc < 1:
        raise InvalidAssocError(f"相联度必须是正整数，当前为 {assoc!r}")
    _policy_module(policy).check_assoc(assoc)


def permutation(policy: Policy, assoc: int, base: int, target: int) -> int:
    """
    命中时的年龄置换 Π_base(target)

    Args:
        policy: 替换策略
        assoc: 相联度 A
        base: 被命中块的年龄（< A）
        target: 待重排块的年龄（< A）

    Returns:
        target 块的新年龄

    Raises:
        InvalidAgeError: base 或 target 不在 0..A-1
        InvalidAssocError: 相联度对该策略不合法
    """
    check_assoc(policy, assoc)
    for name, age in (('base', base), ('target', target)):
        if not 0 <= age < assoc:
            raise InvalidAgeError(f"{name}={age} 不是已缓存年龄 (0..{assoc - 1})")
    return _policy_module(policy).permute(base, target)


@lru_cache(maxsize=None)
def permutation_table(policy: Policy, assoc: int) -> Tuple[Tuple[int, ...], ...]:
    """table[base][target] = Π_base(target)，对每个 base 都是 0..A-1 上的双射"""
    policy = Policy.parse(policy)
    table = tuple(tuple(permutation(policy, assoc, base, target) for target in range(assoc))
                  for base in range(assoc))
    for base, row in enumerate(table):
        if sorted(row) != list(range(assoc)):
            raise InvariantViolationError(
                f"{policy.value} 在 A={assoc}, base={base} 时不是置换: {row}")
    return table


class CacheSetState:
    """
    缓存组状态：按年龄排列的块序列（lines[i] 的年龄为 i）+ 块全集
    不在 lines 中的块年龄均为 A（未缓存）
    """

    __slots__ = ('assoc', 'lines', 'universe', '_hash')

    def __init__(self, assoc: int, lines: Iterable[Block], universe: Iterable[Block]):
        lines = tuple(lines)
        universe = universe if isinstance(universe, frozenset) else frozenset(universe)
        if assoc < 1:
            raise InvalidAssocError(f"相联度必须是正整数，当前为 {assoc!r}")
        if len(lines) != assoc:
            raise InvariantViolationError(
                f"状态必须恰好占满 {assoc} 个年龄，当前为 {len(lines)} 个: {list(lines)}")
        if len(set(lines)) != len(lines):
            raise InvariantViolationError(f"同一个块出现在多个年龄上: {list(lines)}")
        unknown = [b for b in lines if b not in universe]
        if unknown:
            raise UnknownBlockError(f"块 {unknown} 不在块全集中")
        self._init(assoc, lines, universe)

    def _init(self, assoc, lines, universe):
        self.assoc = assoc
        self.lines = lines
        self.universe = universe
        self._hash = hash(lines)

    @classmethod
    def _make(cls, assoc: int, lines: Tuple[Block, ...], universe: FrozenSet[Block]) -> 'CacheSetState':
        # 内部快速构造，调用者保证不变式成立
        state = cls.__new__(cls)
        state._init(assoc, lines, universe)
        return state

    @classmethod
    def from_ages(cls, assoc: int, ages: Mapping[Block, int],
                  universe: Iterable[Block]) -> 'CacheSetState':
        """
        由全映射 Block → Age 构造状态（未列出的块视为年龄 A）

        Raises:
            InvariantViolationError: 两个块共享同一个 < A 的年龄，或某个年龄空缺
            InvalidAgeError: 年龄不在 0..A
        """
        universe = frozenset(universe)
        slots: List = [None] * assoc
        for block, age in ages.items():
            if block not in universe:
                raise UnknownBlockError(f"块 {block!r} 不在块全集中")
            if not isinstance(age, int) or not 0 <= age <= assoc:
                raise InvalidAgeError(f"块 {block!r} 的年龄 {age!r} 不在 0..{assoc}")
            if age == assoc:
                continue
            if slots[age] is not None:
                raise InvariantViolationError(
                    f"块 {slots[age]!r} 与 {block!r} 的年龄都是 {age}")
            slots[age] = block
        missing = [age for age, block in enumerate(slots) if block is None]
        if missing:
            raise InvariantViolationError(f"年龄 {missing} 没有块占用")
        return cls(assoc, slots, universe)

    def age(self, block: Block) -> int:
        """返回块的年龄；未缓存返回 A"""
        if block not in self.universe:
            raise UnknownBlockError(f"块 {block!r} 不在块全集中")
        try:
            return self.lines.index(block)
        except ValueError:
            return self.assoc

    def ages(self) -> Dict[Block, int]:
        """完整的 Block → Age 映射"""
        result = {block: self.assoc for block in self.universe}
        result.update({block: age for age, block in enumerate(self.lines)})
        return result

    def uncached(self) -> List[Block]:
        cached = set(self.lines)
        return sorted((b for b in self.universe if b not in cached), key=block_key)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CacheSetState):
            return NotImplemented
        return (self.lines == other.lines and self.assoc == other.assoc
                and (self.universe is other.universe or self.universe == other.universe))

    def __hash__(self) -> int:
        return self._hash

    def __str__(self) -> str:
        return f"[{','.join(self.lines)} | uncached: {','.join(self.uncached())}]"

    def __repr__(self) -> str:
        return f"CacheSetState{self}"


def view(state: CacheSetState, block: Block) -> Observation:
    """观察函数：块已缓存为 H，否则为 M"""
    if block not in state.universe:
        raise UnknownBlockError(f"块 {block!r} 不在块全集中")
    return Observation.HIT if block in state.lines else Observation.MISS


def update(policy: Policy, state: CacheSetState, block: Block) -> CacheSetState:
    """
    更新函数 upd_block

    缺失：被访问块年龄置 0，已缓存块各老一岁，年龄 A-1 的块被逐出（无论是否为填充块）
    命中：已缓存块按 Π_{age(block)} 重排

    Raises:
        UnknownBlockError: 块不在全集中
    """
    if block not in state.universe:
        raise UnknownBlockError(f"块 {block!r} 不在块全集中")
    lines = state.lines
    try:
        base = lines.index(block)
    except ValueError:
        return CacheSetState._make(state.assoc, (block,) + lines[:-1], state.universe)

    row = permutation_table(policy, state.assoc)[base]
    new_lines: List = [None] * state.assoc
    for age, occupant in enumerate(lines):
        new_lines[row[age]] = occupant
    return CacheSetState._make(state.assoc, tuple(new_lines), state.universe)


def rename(state: CacheSetState, mapping: Mapping[Block, Block]) -> CacheSetState:
    """
    按块双射 f 重命名状态，得到 c∘f⁻¹（未出现在 mapping 中的块保持不变）

    Raises:
        InvariantViolationError: mapping 在全集上不是双射
    """
    universe = frozenset(mapping.get(b, b) for b in state.universe)
    if len(universe) != len(state.universe):
        raise InvariantViolationError("重命名映射在块全集上不是双射")
    return CacheSetState._make(state.assoc, tuple(mapping.get(b, b) for b in state.lines), universe)
