"""
缓存泄露分析工具命令行接口
支持吸收量/提取量批量分析、解析上界、多缓存组组合、状态集导出
退出码：0 成功且精确，2 预算耗尽只得到下界，3 违反不变式，4 输入错误
"""

import json
import math
import sys
from fractions import Fraction
from functools import wraps
from pathlib import Path
from typing import List, Optional

import click
from pydantic import ValidationError

from .cache_core import Policy
from .config import load_settings, setup_logging
from .errors import (BudgetExceededError, CacheLeakError, InvariantViolationError,
                     StateSetParseError)
from .extraction import AttackerKind, compose_sets, success_probability_bound
from .statesets import InitialStatus, export_stateset, import_stateset, victim_states
from .sweep import (LeakageRow, SweepConfig, extract_stateset, extract_toy, render_csv,
                    render_json, render_table, summarize, sweep_absorb, sweep_bound,
                    sweep_extract)

EXIT_OK = 0
EXIT_LOWER_BOUND = 2
EXIT_INVARIANT = 3
EXIT_INPUT = 4

POLICY_CHOICES = ['fifo', 'lru', 'plru', 'all']
FORMAT_CHOICES = ['csv', 'json', 'table']


def _policies(value: str) -> List[Policy]:
    return list(Policy) if value == 'all' else [Policy.parse(value)]


def _initials(value: str) -> List[InitialStatus]:
    return [InitialStatus.FILLED, InitialStatus.EMPTY] if value == 'both' else [InitialStatus(value)]


def _attackers(value: str) -> List[AttackerKind]:
    return [AttackerKind.SHARED, AttackerKind.DISJOINT] if value == 'both' else [AttackerKind(value)]


def _exit_code(error: Exception) -> int:
    if isinstance(error, InvariantViolationError):
        return EXIT_INVARIANT
    if isinstance(error, BudgetExceededError):
        return EXIT_LOWER_BOUND
    return EXIT_INPUT


def reports_errors(command):
    """把分析异常转换成诊断信息和退出码"""
    @wraps(command)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return command(*args, **kwargs)
        except ValidationError as e:
            first = e.errors()[0]
            click.echo(f"❌ 配置无效: {first['msg']}", err=True)
            ctx.exit(EXIT_INPUT)
        except CacheLeakError as e:
            click.echo(f"❌ {e}", err=True)
            ctx.exit(_exit_code(e))
    return wrapper


def _emit(text: str, output: Optional[str]) -> None:
    if output:
        Path(output).write_text(text if text.endswith('\n') else text + '\n', encoding='utf-8')
        click.echo(f"✅ 结果已保存到: {output}", err=True)
    else:
        click.echo(text, nl=not text.endswith('\n'))


def _report(ctx: click.Context, rows: List[LeakageRow], fmt: str, verify: bool,
            output: Optional[str]) -> None:
    """输出报告并按结果设置退出码"""
    if fmt == 'table' and not output:
        render_table(rows, verify)
    elif fmt == 'json':
        _emit(render_json(rows, verify), output)
    else:
        _emit(render_csv(rows, verify), output)

    lower_bounds, mismatches = summarize(rows)
    if mismatches:
        click.echo(f"❌ 闭式解与穷举结果不一致: {mismatches} 行", err=True)
        ctx.exit(EXIT_INVARIANT)
    if lower_bounds:
        click.echo(f"⚠️ {lower_bounds} 行搜索预算耗尽，结果只是下界", err=True)
        ctx.exit(EXIT_LOWER_BOUND)


def common_options(command):
    """absorb / extract / bound 共用的参数"""
    options = [
        click.option('--policy', '-p', type=click.Choice(POLICY_CHOICES), default='all',
                     show_default=True, help='替换策略'),
        click.option('--assoc', '-a', type=int, default=4, show_default=True, help='相联度 A'),
        click.option('--fp-min', type=int, default=0, show_default=True, help='最小 footprint'),
        click.option('--fp-max', type=int, default=None, help='最大 footprint（默认等于 --fp-min）'),
        click.option('--format', '-f', 'fmt', type=click.Choice(FORMAT_CHOICES), default='csv',
                     show_default=True, help='输出格式'),
        click.option('--output', '-o', type=click.Path(dir_okay=False), help='输出到文件'),
    ]
    for option in reversed(options):
        command = option(command)
    return command


@click.group()
@click.option('--verbose', '-v', count=True, help='输出运行日志（-vv 为调试级别）')
@click.option('--env-file', type=click.Path(exists=True, dir_okay=False), help='指定 .env 配置文件')
@click.pass_context
def cli(ctx, verbose, env_file):
    """缓存泄露分析工具 - 量化替换策略的信息吸收与提取"""
    try:
        settings = load_settings(env_file)
    except CacheLeakError as e:
        click.echo(f"❌ {e}", err=True)
        ctx.exit(EXIT_INPUT)
    level = {0: settings.log_level, 1: 'INFO'}.get(verbose, 'DEBUG')
    setup_logging(level)
    ctx.obj = settings


@cli.command()
@common_options
@click.option('--initial', '-i', type=click.Choice(['filled', 'empty', 'both']), default='both',
              show_default=True, help='初始状态')
@click.option('--verify', is_flag=True, help='用可达状态穷举核对闭式解')
@click.option('--max-states', type=int, default=None, help='可达状态数上限')
@click.option('--jobs', '-j', type=int, default=1, show_default=True, help='并行进程数')
@click.pass_context
@reports_errors
def absorb(ctx, policy, assoc, fp_min, fp_max, fmt, output, initial, verify, max_states, jobs):
    """计算信息吸收量（受害者可达的缓存组状态数）"""
    settings = ctx.obj
    config = SweepConfig(policies=_policies(policy), assoc=assoc, fp_min=fp_min,
                         fp_max=fp_min if fp_max is None else fp_max, initials=_initials(initial),
                         verify=verify, max_states=max_states or settings.max_states, jobs=jobs)
    _report(ctx, sweep_absorb(config), fmt, verify, output)


@cli.command()
@common_options
@click.option('--initial', '-i', type=click.Choice(['filled', 'empty', 'both']), default='filled',
              show_default=True, help='初始状态')
@click.option('--attacker', '-t', type=click.Choice(['shared', 'disjoint', 'both']), default='both',
              show_default=True, help='攻击者类型')
@click.option('--machine', type=click.Choice(['cache', 'toy']), default='cache', show_default=True,
              help='分析对象：缓存组或七状态玩具机')
@click.option('--import', 'import_file', type=click.Path(exists=True, dir_okay=False),
              help='从 JSON 导入外部状态集代替生成的 S_v')
@click.option('--verify', is_flag=True, help='同时报告吸收量闭式解')
@click.option('--witness', is_flag=True, help='JSON 输出中附带策略树')
@click.option('--probe-fillers', is_flag=True, help='攻击者也可以访问填充块')
@click.option('--budget-nodes', type=int, default=None, help='搜索节点预算（默认读取 CACHELEAK_BUDGET_NODES）')
@click.option('--budget-seconds', type=float, default=None, help='每个配置点的搜索时间预算（秒）')
@click.option('--max-states', type=int, default=None, help='可达状态数上限')
@click.option('--jobs', '-j', type=int, default=1, show_default=True, help='并行进程数')
@click.pass_context
@reports_errors
def extract(ctx, policy, assoc, fp_min, fp_max, fmt, output, initial, attacker, machine,
            import_file, verify, witness, probe_fillers, budget_nodes, budget_seconds, max_states, jobs):
    """计算最大信息提取量 r_max（自适应探测攻击者）"""
    settings = ctx.obj
    config = SweepConfig(policies=_policies(policy), assoc=assoc, fp_min=fp_min,
                         fp_max=fp_min if fp_max is None else fp_max, initials=_initials(initial),
                         attackers=_attackers(attacker), verify=verify, witness=witness,
                         probe_fillers=probe_fillers,
                         budget_nodes=budget_nodes or settings.budget_nodes,
                         budget_seconds=budget_seconds,
                         max_states=max_states or settings.max_states, jobs=jobs)

    if machine == 'toy':
        rows = [extract_toy(config)]
    elif import_file:
        states = import_stateset(import_file)
        rows = [extract_stateset(states, kind, config) for kind in config.attackers]
    else:
        rows = sweep_extract(config)
    _report(ctx, rows, fmt, verify and machine == 'cache' and not import_file, output)


@cli.command()
@common_options
@click.option('--attacker', '-t', type=click.Choice(['shared', 'disjoint', 'both']), default='both',
              show_default=True, help='攻击者类型')
@click.pass_context
@reports_errors
def bound(ctx, policy, assoc, fp_min, fp_max, fmt, output, attacker):
    """打印提取量的解析上界（共享 PLRU 没有有限上界，留空）"""
    config = SweepConfig(policies=_policies(policy), assoc=assoc, fp_min=fp_min,
                         fp_max=fp_min if fp_max is None else fp_max, attackers=_attackers(attacker))
    _report(ctx, sweep_bound(config), fmt, False, output)


def parse_counts(text: str) -> List[int]:
    """计数文件：JSON 整数数组，或以空白/逗号分隔的整数（# 开头为注释）"""
    stripped = text.strip()
    if stripped.startswith('['):
        try:
            values = json.loads(stripped)
        except json.JSONDecodeError as e:
            raise StateSetParseError(f"JSON 解析失败: {e.msg}", line=e.lineno) from e
        if not isinstance(values, list) or not all(isinstance(v, int) and not isinstance(v, bool)
                                                   for v in values):
            raise StateSetParseError("计数数组只能包含整数")
        return values

    counts = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split('#', 1)[0]
        for token in line.replace(',', ' ').split():
            try:
                counts.append(int(token))
            except ValueError:
                raise StateSetParseError(f"无法解析计数 {token!r}", line=lineno) from None
    return counts


@cli.command()
@click.argument('file', type=click.Path(exists=True, dir_okay=False))
@click.option('--json-output', '-j', is_flag=True, help='JSON格式输出')
@click.pass_context
@reports_errors
def compose(ctx, file, json_output):
    """组合多个独立缓存组的提取量（计数相乘，比特相加）"""
    counts = parse_counts(Path(file).read_text(encoding='utf-8'))
    total = compose_sets(counts)
    if json_output:
        click.echo(json.dumps({'counts': counts, 'total': total,
                               'bits': round(math.log2(total), 4)}, ensure_ascii=False))
    else:
        click.echo(f"📦 缓存组数: {len(counts)}")
        click.echo(f"🔢 知识集总数: {total}")
        click.echo(f"📊 比特数: {math.log2(total):.4f}")


@cli.command()
@click.option('--policy', '-p', type=click.Choice(POLICY_CHOICES[:-1]), required=True, help='替换策略')
@click.option('--assoc', '-a', type=int, default=4, show_default=True, help='相联度 A')
@click.option('--fp', type=int, required=True, help='footprint')
@click.option('--initial', '-i', type=click.Choice(['filled', 'empty']), default='filled',
              show_default=True, help='初始状态')
@click.option('--max-states', type=int, default=None, help='可达状态数上限')
@click.option('--output', '-o', type=click.Path(dir_okay=False), required=True, help='输出 JSON 文件')
@click.pass_context
@reports_errors
def export(ctx, policy, assoc, fp, initial, max_states, output):
    """生成受害者可达状态集并导出为 JSON"""
    states = victim_states(policy, assoc, fp, initial, max_states=max_states or ctx.obj.max_states)
    export_stateset(states, output)
    click.echo(f"✅ 已导出 {len(states)} 个状态到: {output}")


@cli.command()
@click.option('--prior', required=True, help='秘密的最大先验概率，例如 1/256 或 0.01')
@click.option('--channels', '-c', type=int, required=True, help='攻击者可区分的观察数（例如 r_max）')
@click.pass_context
@reports_errors
def guess(ctx, prior, channels):
    """一次猜中秘密的概率上界 min(1, 先验 × 观察数)"""
    try:
        max_prior = Fraction(prior)
    except (ValueError, ZeroDivisionError):
        raise CacheLeakError(f"无法解析概率 {prior!r}") from None
    result = success_probability_bound(max_prior, channels)
    click.echo(f"🎯 成功概率上界: {result} ≈ {float(result):.6f}")


@cli.command('set-index')
@click.argument('address')
@click.option('--line-size', type=int, default=64, show_default=True, help='缓存行大小（字节）')
@click.option('--sets', type=int, default=64, show_default=True, help='缓存组数')
@click.pass_context
@reports_errors
def set_index(ctx, address, line_size, sets):
    """计算地址所在的缓存组：(address // line_size) % sets"""
    try:
        value = int(address, 0)
    except ValueError:
        raise CacheLeakError(f"无法解析地址 {address!r}") from None
    if value < 0 or line_size < 1 or sets < 1:
        raise CacheLeakError("地址必须非负，行大小与组数必须为正")
    click.echo(str(cache_set_index(value, line_size, sets)))


def cache_set_index(address: int, line_size: int, sets: int) -> int:
    return (address // line_size) % sets


def main(argv: Optional[List[str]] = None) -> None:
    """console_scripts 入口"""
    try:
        code = cli.main(args=argv, prog_name='cache-leak', standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("已取消", err=True)
        code = 1
    except click.ClickException as e:
        e.show()
        code = EXIT_INPUT
    sys.exit(code or EXIT_OK)


if __name__ == '__main__':
    main()
