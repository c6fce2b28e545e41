"""
泄露分析批量引擎
核心功能：按配置遍历 (策略, 初始状态, 攻击者, footprint)，计算吸收量/提取量/上界，生成报告
"""

import csv
import io
import json
import math
import multiprocessing
import time
from functools import partial
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field, model_validator
from rich.console import Console
from rich.table import Table

from . import cache_core
from .absorption import AbsorptionQuery, absorb, oracle_count
from .cache_core import Policy
from .config import DEFAULT_BUDGET_NODES, DEFAULT_MAX_STATES, get_logger
from .errors import InvariantViolationError
from .extraction import (AttackerKind, AttackerModel, SearchLimits, leakage_bound,
                         max_leakage)
from .mealy import CacheMachine, ToyMachine
from .statesets import InitialStatus, StateSet, victim_states

logger = get_logger('sweep')

CSV_FIELDS = ['policy', 'assoc', 'initial', 'attacker', 'footprint',
              'absorption_count', 'absorption_bits', 'extraction_count', 'extraction_bits',
              'bound_count', 'exact', 'runtime_ms']
VERIFY_FIELDS = ['oracle_count', 'oracle_match']

NOT_APPLICABLE = '-'


class SweepPoint(BaseModel):
    """一个配置点"""
    policy: Policy
    assoc: int
    initial: InitialStatus
    attacker: Optional[AttackerKind] = None
    footprint: int


class SweepConfig(BaseModel):
    """批量分析配置"""
    policies: List[Policy] = Field(min_length=1)
    assoc: int = Field(4, ge=1)
    fp_min: int = Field(0, ge=0)
    fp_max: int = Field(0, ge=0)
    initials: List[InitialStatus] = Field(default_factory=lambda: [InitialStatus.FILLED], min_length=1)
    attackers: List[AttackerKind] = Field(default_factory=lambda: [AttackerKind.SHARED], min_length=1)
    verify: bool = False
    budget_nodes: int = Field(DEFAULT_BUDGET_NODES, gt=0)
    budget_seconds: Optional[float] = Field(None, gt=0)
    max_states: int = Field(DEFAULT_MAX_STATES, gt=0)
    probe_fillers: bool = False
    witness: bool = False
    jobs: int = Field(1, ge=1)

    @model_validator(mode='after')
    def _check_ranges(self) -> 'SweepConfig':
        if self.fp_min > self.fp_max:
            raise ValueError(f"fp_min={self.fp_min} 大于 fp_max={self.fp_max}")
        for policy in self.policies:
            cache_core.check_assoc(policy, self.assoc)
        return self

    def footprints(self) -> range:
        return range(self.fp_min, self.fp_max + 1)

    def points(self, with_attacker: bool = True) -> List[SweepPoint]:
        """按配置顺序展开：策略 → 初始状态 → 攻击者 → footprint"""
        attackers: Sequence[Optional[AttackerKind]] = self.attackers if with_attacker else [None]
        return [SweepPoint(policy=policy, assoc=self.assoc, initial=initial, attacker=attacker,
                           footprint=fp)
                for policy in self.policies
                for initial in self.initials
                for attacker in attackers
                for fp in self.footprints()]

    def limits(self, footprint: int) -> SearchLimits:
        return SearchLimits.for_cache(self.assoc, footprint, self.budget_nodes, self.budget_seconds)


class LeakageRow(BaseModel):
    """报告中的一行"""
    policy: str
    assoc: Optional[int] = None
    initial: str = NOT_APPLICABLE
    attacker: str = NOT_APPLICABLE
    footprint: Optional[int] = None
    absorption_count: Optional[int] = None
    extraction_count: Optional[int] = None
    bound_count: Optional[int] = None
    exact: bool = True
    runtime_ms: float = 0.0
    depth: Optional[int] = None
    nodes: Optional[int] = None
    oracle_count: Optional[int] = None
    witness: Optional[dict] = None

    @property
    def absorption_bits(self) -> Optional[float]:
        return _bits(self.absorption_count)

    @property
    def extraction_bits(self) -> Optional[float]:
        return _bits(self.extraction_count)

    @property
    def oracle_match(self) -> Optional[bool]:
        if self.oracle_count is None:
            return None
        return self.oracle_count == self.absorption_count

    def check(self, against_bound: bool = True) -> None:
        """每一行都必须满足 提取量 ≤ 吸收量，且不超过有限上界"""
        if self.extraction_count is None:
            return
        if self.absorption_count is not None and self.extraction_count > self.absorption_count:
            raise InvariantViolationError(
                f"{self.label()}: 提取量 {self.extraction_count} 超过吸收量 {self.absorption_count}")
        if against_bound and self.bound_count is not None and self.extraction_count > self.bound_count:
            raise InvariantViolationError(
                f"{self.label()}: 提取量 {self.extraction_count} 超过上界 {self.bound_count}")

    def label(self) -> str:
        return f"{self.policy} A={self.assoc} {self.initial} {self.attacker} fp={self.footprint}"


def _bits(count: Optional[int]) -> Optional[float]:
    return None if count is None else math.log2(count)


def _elapsed_ms(started: float) -> float:
    return (time.perf_counter() - started) * 1000.0


# ========== 单点计算 ==========

def absorb_point(point: SweepPoint, config: SweepConfig) -> LeakageRow:
    """闭式吸收量；verify 时附带穷举结果"""
    started = time.perf_counter()
    query = AbsorptionQuery(point.policy, point.assoc, point.footprint, point.initial)
    row = LeakageRow(policy=point.policy.value, assoc=point.assoc, initial=point.initial.value,
                     footprint=point.footprint, absorption_count=absorb(query).count)
    if config.verify:
        row.oracle_count = oracle_count(query, config.max_states).count
    row.runtime_ms = _elapsed_ms(started)
    return row


def extract_point(point: SweepPoint, config: SweepConfig) -> LeakageRow:
    """在生成的 S_v 上运行划分搜索"""
    started = time.perf_counter()
    states = victim_states(point.policy, point.assoc, point.footprint, point.initial,
                           max_states=config.max_states)
    row = extract_stateset(states, point.attacker, config, initial=point.initial.value,
                           limits=config.limits(point.footprint))
    if config.verify:
        query = AbsorptionQuery(point.policy, point.assoc, point.footprint, point.initial)
        row.oracle_count = row.absorption_count
        row.absorption_count = absorb(query).count
    row.runtime_ms = _elapsed_ms(started)
    return row


def extract_stateset(states: StateSet, attacker: AttackerKind, config: SweepConfig,
                     initial: str = 'imported', limits: Optional[SearchLimits] = None) -> LeakageRow:
    """对任意状态集（生成或导入）计算提取量"""
    started = time.perf_counter()
    universe = states.universe
    model = AttackerModel.build(attacker, universe, states.assoc, config.probe_fillers)
    machine = CacheMachine(states.policy, states.assoc, universe.blocks)
    limits = limits or SearchLimits.for_cache(states.assoc, universe.footprint,
                                              config.budget_nodes, config.budget_seconds)
    result = max_leakage(machine, states, model.alphabet, limits, witness=config.witness)
    bound = leakage_bound(states.policy, states.assoc, model.kind, universe.footprint,
                          possible_size=len(states))
    row = LeakageRow(
        policy=states.policy.value, assoc=states.assoc, initial=initial,
        attacker=model.kind.value, footprint=universe.footprint,
        absorption_count=len(states), extraction_count=result.r_max,
        bound_count=bound.count, exact=result.exact, depth=result.depth, nodes=result.nodes,
        witness=result.witness.to_json() if result.witness else None,
        runtime_ms=_elapsed_ms(started),
    )
    # 上界只针对新鲜探测块推导，攻击者也访问填充块时不适用
    row.check(against_bound=not config.probe_fillers)
    return row


def extract_toy(config: SweepConfig) -> LeakageRow:
    """七状态玩具机"""
    started = time.perf_counter()
    machine = ToyMachine()
    limits = SearchLimits(config.budget_nodes, max_seconds=config.budget_seconds)
    result = max_leakage(machine, machine.states, limits=limits, witness=config.witness)
    row = LeakageRow(policy='toy', absorption_count=len(machine.states), extraction_count=result.r_max,
                     exact=result.exact, depth=result.depth, nodes=result.nodes,
                     witness=result.witness.to_json() if result.witness else None,
                     runtime_ms=_elapsed_ms(started))
    row.check()
    return row


def bound_point(point: SweepPoint) -> LeakageRow:
    bound = leakage_bound(point.policy, point.assoc, point.attacker, point.footprint)
    return LeakageRow(policy=point.policy.value, assoc=point.assoc, attacker=point.attacker.value,
                      footprint=point.footprint, bound_count=bound.count)


def run_points(worker: Callable[[SweepPoint], LeakageRow], points: Iterable[SweepPoint],
               jobs: int = 1) -> List[LeakageRow]:
    """逐点计算；jobs > 1 时用进程池，结果仍按配置顺序返回"""
    points = list(points)
    if jobs <= 1 or len(points) <= 1:
        rows = []
        for point in points:
            rows.append(worker(point))
            logger.debug("完成 %s", rows[-1].label())
        return rows
    logger.info("使用 %d 个进程计算 %d 个配置点", jobs, len(points))
    with multiprocessing.Pool(min(jobs, len(points))) as pool:
        return pool.map(worker, points)


def sweep_absorb(config: SweepConfig) -> List[LeakageRow]:
    return run_points(partial(absorb_point, config=config), config.points(with_attacker=False),
                      config.jobs)


def sweep_extract(config: SweepConfig) -> List[LeakageRow]:
    return run_points(partial(extract_point, config=config), config.points(), config.jobs)


def sweep_bound(config: SweepConfig) -> List[LeakageRow]:
    # 上界与初始状态无关
    points = [SweepPoint(policy=policy, assoc=config.assoc, initial=InitialStatus.FILLED,
                         attacker=attacker, footprint=fp)
              for policy in config.policies
              for attacker in config.attackers
              for fp in config.footprints()]
    return run_points(bound_point, points)


# ========== 输出 ==========

def _cell(value) -> str:
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return f'{value:.4f}'
    return str(value)


def row_fields(verify: bool = False) -> List[str]:
    return CSV_FIELDS + (VERIFY_FIELDS if verify else [])


def row_values(row: LeakageRow, verify: bool = False) -> List[str]:
    values = []
    for name in row_fields(verify):
        value = getattr(row, name)
        if name == 'runtime_ms':
            values.append(f'{value:.1f}')
        else:
            values.append(_cell(value))
    return values


def render_csv(rows: Sequence[LeakageRow], verify: bool = False) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(row_fields(verify))
    for row in rows:
        writer.writerow(row_values(row, verify))
    return buffer.getvalue()


def render_json(rows: Sequence[LeakageRow], verify: bool = False) -> str:
    documents = []
    for row in rows:
        document = {name: getattr(row, name) for name in row_fields(verify)}
        for name in ('absorption_bits', 'extraction_bits'):
            if document[name] is not None:
                document[name] = round(document[name], 4)
        document['runtime_ms'] = round(row.runtime_ms, 1)
        document['depth'] = row.depth
        document['nodes'] = row.nodes
        if row.witness is not None:
            document['witness'] = row.witness
        documents.append(document)
    return json.dumps(documents, indent=2, ensure_ascii=False)


def render_table(rows: Sequence[LeakageRow], verify: bool = False,
                 console: Optional[Console] = None, title: str = '缓存泄露分析') -> None:
    """用 rich 表格打印报告"""
    console = console or Console()
    table = Table(title=f"🔐 {title}")
    for name in row_fields(verify):
        table.add_column(name, justify='left' if name in ('policy', 'initial', 'attacker') else 'right')
    for row in rows:
        cells = row_values(row, verify)
        style = None if row.exact and row.oracle_match is not False else 'red'
        table.add_row(*cells, style=style)
    console.print(table)


def summarize(rows: Sequence[LeakageRow]) -> Tuple[int, int]:
    """(下界行数, 对照不一致行数)"""
    lower_bounds = sum(1 for row in rows if not row.exact)
    mismatches = sum(1 for row in rows if row.oracle_match is False)
    return lower_bounds, mismatches
