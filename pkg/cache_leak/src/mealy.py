"""
通用 Mealy 机抽象
探测 (probe)、知识集 K(p)、最终知识集 FK(p)、探测策略的划分
提取引擎只依赖这里的接口，因此同时适用于缓存和任意小型夹具（例如玩具机）
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import (Callable, Dict, FrozenSet, Hashable, Iterable, List, Mapping,
                    Sequence, Tuple)

from . import cache_core
from .cache_core import Block, CacheSetState, Observation, Policy
from .errors import CacheLeakError, UnknownInputError

State = Hashable
Input = Hashable
Output = Hashable


class MealyMachine(ABC):
    """确定性 Mealy 机：upd 与 view 在声明的字母表上全定义"""

    @property
    @abstractmethod
    def inputs(self) -> Tuple[Input, ...]:
        """有序输入字母表 Σ"""

    @property
    @abstractmethod
    def outputs(self) -> Tuple[Output, ...]:
        """有序输出字母表 O（决定观察值的遍历顺序）"""

    @abstractmethod
    def upd(self, state: State, symbol: Input) -> State:
        ...

    @abstractmethod
    def view(self, state: State, symbol: Input) -> Output:
        ...

    def check_input(self, symbol: Input) -> None:
        if symbol not in self.inputs:
            raise UnknownInputError(f"输入 {symbol!r} 不在字母表中")


class ToyMachine(MealyMachine):
    """
    七状态玩具机：S = Σ = {0..6}
    view_σ(s) = 0 (s < σ-1), 2 (σ-1 ≤ s ≤ σ+1), 1 (s > σ+1)
    upd_σ(s)  = s+1 (s < σ), s (σ ≤ s ≤ σ+1), s-1 (s > σ+1)
    """

    def __init__(self, size: int = 7):
        self.size = size
        self._symbols = tuple(range(size))

    @property
    def inputs(self):
        return self._symbols

    @property
    def outputs(self):
        return (0, 1, 2)

    @property
    def states(self) -> FrozenSet[int]:
        return frozenset(self._symbols)

    def upd(self, state, symbol):
        self.check_input(symbol)
        if state < symbol:
            return state + 1
        if state <= symbol + 1:
            return state
        return state - 1

    def view(self, state, symbol):
        self.check_input(symbol)
        if state < symbol - 1:
            return 0
        if state <= symbol + 1:
            return 2
        return 1


class TableMachine(MealyMachine):
    """由显式转移表/输出表给出的有限 Mealy 机"""

    def __init__(self, transitions: Mapping[Tuple[State, Input], State],
                 observations: Mapping[Tuple[State, Input], Output]):
        if set(transitions) != set(observations):
            raise CacheLeakError("转移表与输出表的定义域不一致")
        self._transitions = dict(transitions)
        self._observations = dict(observations)
        self._states = frozenset(s for s, _ in transitions)
        self._inputs = tuple(sorted({a for _, a in transitions}, key=repr))
        self._outputs = tuple(sorted(set(observations.values()), key=repr))
        for state in self._states:
            for symbol in self._inputs:
                if (state, symbol) not in self._transitions:
                    raise CacheLeakError(f"状态 {state!r} 在输入 {symbol!r} 上没有转移")

    @property
    def inputs(self):
        return self._inputs

    @property
    def outputs(self):
        return self._outputs

    @property
    def states(self) -> FrozenSet[State]:
        return self._states

    def upd(self, state, symbol):
        try:
            return self._transitions[(state, symbol)]
        except KeyError:
            raise UnknownInputError(f"({state!r}, {symbol!r}) 没有定义转移") from None

    def view(self, state, symbol):
        try:
            return self._observations[(state, symbol)]
        except KeyError:
            raise UnknownInputError(f"({state!r}, {symbol!r}) 没有定义输出") from None


class CacheMachine(MealyMachine):
    """把一个缓存组 (策略, 相联度, 块全集) 包装成 Mealy 机，输入为内存块，输出为 H/M"""

    def __init__(self, policy: Policy, assoc: int, blocks: Iterable[Block]):
        self.policy = Policy.parse(policy)
        self.assoc = assoc
        cache_core.check_assoc(self.policy, assoc)
        self._inputs = tuple(sorted(set(blocks), key=cache_core.block_key))

    @property
    def inputs(self):
        return self._inputs

    @property
    def outputs(self):
        return (Observation.HIT, Observation.MISS)

    def upd(self, state: CacheSetState, symbol: Block) -> CacheSetState:
        return cache_core.update(self.policy, state, symbol)

    def view(self, state: CacheSetState, symbol: Block) -> Observation:
        return cache_core.view(state, symbol)


@dataclass(frozen=True)
class Probe:
    """交替的 (输入, 观察) 序列，可以为空"""
    steps: Tuple[Tuple[Input, Output], ...] = ()

    @classmethod
    def of(cls, *steps: Tuple[Input, Output]) -> 'Probe':
        return cls(tuple(tuple(step) for step in steps))

    @property
    def inputs(self) -> Tuple[Input, ...]:
        return tuple(symbol for symbol, _ in self.steps)

    @property
    def observations(self) -> Tuple[Output, ...]:
        return tuple(obs for _, obs in self.steps)

    def extend(self, symbol: Input, observation: Output) -> 'Probe':
        return Probe(self.steps + ((symbol, observation),))

    def __len__(self) -> int:
        return len(self.steps)


def run_trace(machine: MealyMachine, start: State,
              inputs: Sequence[Input]) -> Tuple[State, Tuple[Output, ...]]:
    """
    在 start 上依次施加输入

    Returns:
        (最终状态, 每一步的观察)

    Raises:
        UnknownInputError: 输入不在字母表中
    """
    state = start
    observations = []
    for symbol in inputs:
        machine.check_input(symbol)
        observations.append(machine.view(state, symbol))
        state = machine.upd(state, symbol)
    return state, tuple(observations)


def knowledge_set(machine: MealyMachine, candidates: Iterable[State], probe: Probe) -> FrozenSet[State]:
    """K(p)：与探测一致的候选初始状态"""
    for symbol in probe.inputs:
        machine.check_input(symbol)
    expected = probe.observations
    return frozenset(s for s in candidates
                     if run_trace(machine, s, probe.inputs)[1] == expected)


def final_knowledge_set(machine: MealyMachine, candidates: Iterable[State], probe: Probe) -> FrozenSet[State]:
    """FK(p)：K(p) 在探测输入序列作用后的像"""
    return frozenset(run_trace(machine, s, probe.inputs)[0]
                     for s in knowledge_set(machine, candidates, probe))


def split(machine: MealyMachine, states: Iterable[State], symbol: Input) -> Dict[Output, List[State]]:
    """按观察值把状态集分组，键按 machine.outputs 的顺序排列"""
    groups: Dict[Output, List[State]] = {}
    for state in states:
        groups.setdefault(machine.view(state, symbol), []).append(state)
    order = {obs: i for i, obs in enumerate(machine.outputs)}
    return dict(sorted(groups.items(), key=lambda item: order.get(item[0], len(order))))


# 探测策略：观察历史 → 下一个输入
Strategy = Callable[[Tuple[Output, ...]], Input]


@dataclass(frozen=True)
class StrategyPartition:
    """给定探测策略诱导的划分 R_att"""
    knowledge_sets: Tuple[FrozenSet[State], ...]
    probes: Tuple[Probe, ...]

    @property
    def count(self) -> int:
        return len(self.knowledge_sets)

    @property
    def max_probe_length(self) -> int:
        return max((len(p) for p in self.probes), default=0)


def evaluate_strategy(machine: MealyMachine, candidates: Iterable[State],
                      strategy: Strategy, max_length: int) -> StrategyPartition:
    """
    按策略探测 max_length 步，返回知识集划分以及每个知识集的最短耗尽探测

    同一完整观察序列的状态属于同一知识集；最短探测是知识集不再变化的最短前缀
    """
    traces = {}
    for start in candidates:
        state, history, steps = start, (), []
        for _ in range(max_length):
            symbol = strategy(history)
            machine.check_input(symbol)
            obs = machine.view(state, symbol)
            state = machine.upd(state, symbol)
            history += (obs,)
            steps.append((symbol, obs))
        traces[start] = tuple(steps)

    groups: Dict[Tuple, List[State]] = {}
    for start, steps in traces.items():
        groups.setdefault(tuple(o for _, o in steps), []).append(start)

    knowledge_sets, probes = [], []
    for observations in sorted(groups, key=repr):
        members = frozenset(groups[observations])
        steps = traces[next(iter(members))]
        length = max_length
        while length > 0:
            prefix = steps[:length - 1]
            coherent = frozenset(s for s, t in traces.items() if t[:length - 1] == prefix)
            if coherent != members:
                break
            length -= 1
        knowledge_sets.append(members)
        probes.append(Probe(steps[:length]))
    return StrategyPartition(tuple(knowledge_sets), tuple(probes))
