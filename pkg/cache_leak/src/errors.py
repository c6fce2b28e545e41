"""
缓存泄露分析工具的异常定义
所有异常都继承自 CacheLeakError（ValueError 的子类），CLI 据此映射退出码
"""

from typing import Optional


class CacheLeakError(ValueError):
    """所有分析错误的基类"""


class InvalidAgeError(CacheLeakError):
    """年龄超出 0..A-1（置换函数只定义在已缓存的年龄上）"""


class InvalidAssocError(CacheLeakError):
    """相联度不合法，例如 PLRU 使用非 2 的幂"""


class UnknownBlockError(CacheLeakError):
    """访问的内存块不在状态的块全集中"""


class UnknownInputError(CacheLeakError):
    """输入不在 Mealy 机的输入字母表中"""


class InsufficientBlocksError(CacheLeakError):
    """填充块或探测块数量不足"""


class OutOfRangeError(CacheLeakError):
    """参数超出定义域（例如 Λ 的 k > A）"""


class InvariantViolationError(CacheLeakError):
    """违反不变式：状态不满足单射性、提取量超过吸收量、闭式解与穷举不一致等"""


class StateLimitError(CacheLeakError):
    """可达状态集超过配置的上限"""


class InvalidProbabilityError(CacheLeakError):
    """概率不在 (0, 1] 内，或通道数小于 1"""


class BudgetExceededError(CacheLeakError):
    """搜索预算耗尽（仅在 strict 模式下抛出，否则返回带标记的下界）"""

    def __init__(self, message: str, lower_bound: int = 1):
        super().__init__(message)
        self.lower_bound = lower_bound


class ConfigError(CacheLeakError):
    """环境变量或配置值格式错误"""


class StateSetParseError(CacheLeakError):
    """状态集 JSON 文档解析失败，附带行号/字段定位"""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        location = []
        if line is not None:
            location.append(f"第 {line} 行")
        if field:
            location.append(f"字段 {field}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.line = line
        self.field = field
