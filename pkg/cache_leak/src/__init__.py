"""
缓存泄露分析工具
量化 FIFO / LRU / PLRU 缓存组的信息吸收量与信息提取量
"""

__version__ = '0.1.0'
