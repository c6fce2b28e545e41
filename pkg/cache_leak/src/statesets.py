"""
受害者可能状态集 S_v 的构造与序列化
空/满初始状态、可达状态不动点、JSON 导入导出
"""

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, ValidationError

from . import cache_core
from .cache_core import Block, CacheSetState, Policy, block_key
from .config import DEFAULT_MAX_STATES, get_logger
from .errors import (CacheLeakError, InsufficientBlocksError, InvariantViolationError,
                     StateLimitError, StateSetParseError, UnknownBlockError)

logger = get_logger('statesets')

FORMAT_VERSION = 1


class InitialStatus(str, Enum):
    """初始状态相对于受害者块的状态"""
    FILLED = 'filled'
    EMPTY = 'empty'


@dataclass(frozen=True)
class BlockUniverse:
    """
    块全集：受害者块 B_v、填充块（攻击者持有，受害者不可访问）、新鲜探测块
    """
    victim_blocks: Tuple[Block, ...]
    filler_blocks: Tuple[Block, ...]
    probe_blocks: Tuple[Block, ...] = ()

    def __post_init__(self):
        groups = (self.victim_blocks, self.filler_blocks, self.probe_blocks)
        everything = [b for group in groups for b in group]
        if len(set(everything)) != len(everything):
            raise InvariantViolationError(
                f"受害者块、填充块与探测块必须两两不相交且无重复: {everything}")

    @classmethod
    def build(cls, footprint: int, assoc: int, probes: Optional[int] = None) -> 'BlockUniverse':
        """生成确定性的块名：b<i> 受害者，x<i> 填充，p<i> 探测"""
        if footprint < 0:
            raise CacheLeakError(f"footprint 不能为负: {footprint}")
        probes = assoc if probes is None else probes
        return cls(tuple(f'b{i}' for i in range(footprint)),
                   tuple(f'x{i}' for i in range(assoc)),
                   tuple(f'p{i}' for i in range(probes)))

    @property
    def footprint(self) -> int:
        return len(self.victim_blocks)

    @cached_property
    def blocks(self) -> FrozenSet[Block]:
        return frozenset(self.victim_blocks + self.filler_blocks + self.probe_blocks)

    def with_probes(self, count: int) -> 'BlockUniverse':
        """补充 count 个不与现有块重名的新鲜探测块"""
        taken = set(self.victim_blocks) | set(self.filler_blocks)
        probes, i = [], 0
        while len(probes) < count:
            name = f'p{i}'
            if name not in taken:
                probes.append(name)
            i += 1
        return BlockUniverse(self.victim_blocks, self.filler_blocks, tuple(probes))


@dataclass(frozen=True)
class StateSet:
    """同一配置（策略、相联度、块全集）下的有限状态集"""
    policy: Policy
    assoc: int
    universe: BlockUniverse
    states: FrozenSet[CacheSetState] = field(default_factory=frozenset)

    def __post_init__(self):
        for state in self.states:
            if state.assoc != self.assoc or state.universe != self.universe.blocks:
                raise InvariantViolationError(f"状态 {state} 与状态集的配置不一致")

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self) -> Iterator[CacheSetState]:
        return iter(self.sorted_states())

    def __contains__(self, state) -> bool:
        return state in self.states

    def sorted_states(self) -> List[CacheSetState]:
        """规范顺序：按各年龄上块的自然序"""
        return sorted(self.states, key=lambda s: tuple(block_key(b) for b in s.lines))


def _check_fillers(assoc: int, universe: BlockUniverse) -> None:
    if len(universe.filler_blocks) < assoc:
        raise InsufficientBlocksError(
            f"需要 {assoc} 个填充块，当前只有 {len(universe.filler_blocks)} 个")


def initial_empty(assoc: int, universe: BlockUniverse) -> CacheSetState:
    """空状态：受害者块都未缓存，填充块按顺序占据年龄 0..A-1"""
    _check_fillers(assoc, universe)
    return CacheSetState(assoc, universe.filler_blocks[:assoc], universe.blocks)


def initial_partial(assoc: int, universe: BlockUniverse, cached: int) -> CacheSetState:
    """部分填充：前 cached 个受害者块占据最年轻的年龄，其余年龄由填充块占据"""
    _check_fillers(assoc, universe)
    cached = min(cached, assoc, universe.footprint)
    lines = universe.victim_blocks[:cached] + universe.filler_blocks[:assoc - cached]
    return CacheSetState(assoc, lines, universe.blocks)


def initial_filled(assoc: int, universe: BlockUniverse) -> CacheSetState:
    """满状态：受害者块 b_0..b_{min(A,fp)-1} 占据最年轻的年龄"""
    return initial_partial(assoc, universe, universe.footprint)


def initial_state(status: InitialStatus, assoc: int, universe: BlockUniverse) -> CacheSetState:
    status = InitialStatus(status)
    if status is InitialStatus.FILLED:
        return initial_filled(assoc, universe)
    return initial_empty(assoc, universe)


def reachable_states(policy: Policy, assoc: int, start: CacheSetState, inputs: Iterable[Block], *,
                     universe: BlockUniverse, max_states: Optional[int] = None) -> StateSet:
    """
    可达状态集：包含 start 且对 inputs 中任意块的更新封闭的最小集合（广度优先）

    Raises:
        UnknownBlockError: 输入块不在全集中
        StateLimitError: 状态数超过 max_states
    """
    policy = Policy.parse(policy)
    cache_core.check_assoc(policy, assoc)
    if start.assoc != assoc:
        raise InvariantViolationError(f"初始状态相联度 {start.assoc} 与配置 {assoc} 不一致")
    inputs = sorted(set(inputs), key=block_key)
    for block in inputs:
        if block not in universe.blocks:
            raise UnknownBlockError(f"输入块 {block!r} 不在块全集中")
    if any(block in universe.filler_blocks for block in inputs):
        raise CacheLeakError("受害者输入不能包含填充块（填充块只属于攻击者）")
    limit = max_states or DEFAULT_MAX_STATES

    seen = {start}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        for block in inputs:
            successor = cache_core.update(policy, state, block)
            if successor not in seen:
                seen.add(successor)
                if len(seen) > limit:
                    raise StateLimitError(
                        f"可达状态数超过上限 {limit}（{policy.value}, A={assoc}, "
                        f"fp={len(inputs)}），请检查配置或调大 --max-states")
                queue.append(successor)

    logger.debug("可达状态: %s A=%d 起点 %s 输入 %d 个 → %d 个状态",
                 policy.value, assoc, start, len(inputs), len(seen))
    return StateSet(policy, assoc, universe, frozenset(seen))


def victim_states(policy: Policy, assoc: int, footprint: int, status: InitialStatus,
                  probes: Optional[int] = None, max_states: Optional[int] = None) -> StateSet:
    """按 (策略, 相联度, footprint, 初始状态) 生成 S_v"""
    universe = BlockUniverse.build(footprint, assoc, probes)
    start = initial_state(status, assoc, universe)
    return reachable_states(policy, assoc, start, universe.victim_blocks,
                            universe=universe, max_states=max_states)


# ========== JSON 导入导出 ==========

class StateSetDocument(BaseModel):
    """状态集 JSON 文档（版本化）"""
    model_config = ConfigDict(extra='forbid')

    version: int
    policy: Policy
    assoc: int
    victim_blocks: List[Block]
    filler_blocks: List[Block]
    states: List[Union[List[Block], Dict[Block, int]]]


def _document(stateset: StateSet) -> Dict:
    return {
        'version': FORMAT_VERSION,
        'policy': stateset.policy.value,
        'assoc': stateset.assoc,
        'victim_blocks': list(stateset.universe.victim_blocks),
        'filler_blocks': list(stateset.universe.filler_blocks),
        'states': [list(state.lines) for state in stateset.sorted_states()],
    }


def dumps_stateset(stateset: StateSet) -> str:
    return json.dumps(_document(stateset), indent=2, ensure_ascii=False)


def export_stateset(stateset: StateSet, destination: Union[str, Path]) -> None:
    """写出状态集 JSON（UTF-8，状态按规范顺序）"""
    Path(destination).write_text(dumps_stateset(stateset) + '\n', encoding='utf-8')
    logger.info("已导出 %d 个状态到 %s", len(stateset), destination)


def loads_stateset(text: str, probes: Optional[int] = None) -> StateSet:
    """
    解析状态集 JSON；探测块按相联度重新生成

    每个状态可以是按年龄排列的块列表，也可以是 {块: 年龄} 映射

    Raises:
        StateSetParseError: JSON 语法错误或字段不合法
        InvariantViolationError: 状态违反单射性（例如两个块同为年龄 1）
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise StateSetParseError(f"JSON 解析失败: {e.msg}", line=e.lineno) from e

    try:
        doc = StateSetDocument.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        loc = '.'.join(str(part) for part in first['loc'])
        raise StateSetParseError(f"状态集文档不合法: {first['msg']}", field=loc) from e

    if doc.version != FORMAT_VERSION:
        raise StateSetParseError(f"不支持的格式版本 {doc.version}", field='version')
    try:
        cache_core.check_assoc(doc.policy, doc.assoc)
    except CacheLeakError as e:
        raise StateSetParseError(str(e), field='assoc') from e

    universe = BlockUniverse(tuple(doc.victim_blocks), tuple(doc.filler_blocks))
    universe = universe.with_probes(doc.assoc if probes is None else probes)
    states = set()
    for index, entry in enumerate(doc.states):
        try:
            if isinstance(entry, dict):
                state = CacheSetState.from_ages(doc.assoc, entry, universe.blocks)
            else:
                state = CacheSetState(doc.assoc, entry, universe.blocks)
        except InvariantViolationError as e:
            raise InvariantViolationError(f"states.{index}: {e}") from e
        except CacheLeakError as e:
            raise StateSetParseError(str(e), field=f'states.{index}') from e
        if any(b in universe.probe_blocks for b in state.lines):
            raise StateSetParseError("状态中出现了未声明的块", field=f'states.{index}')
        states.add(state)
    if not states:
        raise StateSetParseError("状态集为空", field='states')
    return StateSet(doc.policy, doc.assoc, universe, frozenset(states))


def import_stateset(source: Union[str, Path], probes: Optional[int] = None) -> StateSet:
    """读取状态集 JSON 文件"""
    text = Path(source).read_text(encoding='utf-8')
    stateset = loads_stateset(text, probes)
    logger.info("从 %s 导入 %d 个状态 (%s, A=%d)", source, len(stateset),
                stateset.policy.value, stateset.assoc)
    return stateset
