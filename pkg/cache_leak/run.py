#!/usr/bin/env python3
"""
缓存泄露分析工具 - 统一启动脚本
设置导入路径、检查依赖，然后启动命令行
"""

import logging
import os
import sys

logging.basicConfig(level=logging.INFO, format='%(message)s')
logger = logging.getLogger('cache-leak.run')

REQUIRED_PACKAGES = {
    'click': 'click',
    'rich': 'rich',
    'pydantic': 'pydantic',
    'dotenv': 'python-dotenv',
}


def setup_environment():
    """把项目根目录（cache_leak 的父目录）加入 Python 路径"""
    current_dir = os.path.dirname(os.path.abspath(__file__))
    project_root = os.path.dirname(current_dir)
    if project_root not in sys.path:
        sys.path.insert(0, project_root)
        logger.debug(f"✅ 添加路径: {project_root}")


def check_dependencies() -> bool:
    """检查必要的依赖是否安装"""
    missing = []
    for module, package in REQUIRED_PACKAGES.items():
        try:
            __import__(module)
        except ImportError:
            missing.append(package)

    if missing:
        logger.error(f"❌ 缺少依赖: {', '.join(missing)}")
        logger.info("💡 运行: pip install -r requirements.txt")
        return False
    return True


def main():
    setup_environment()
    if not check_dependencies():
        sys.exit(4)

    from cache_leak.src.cli import main as cli_main
    cli_main()


if __name__ == '__main__':
    main()
