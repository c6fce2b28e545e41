# setup.py
from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="cache-leak",
    version="0.1.0",
    description="Quantify information absorption and extraction of FIFO/LRU/PLRU cache sets",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(include=["cache_leak", "cache_leak.*"], exclude=["cache_leak.test", "cache_leak.test.*"]),
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Security",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
    ],
    python_requires=">=3.9",
    install_requires=[
        "click>=8.0",
        "rich>=10.0",
        "pydantic>=2.0",
        "python-dotenv>=0.19",
    ],
    entry_points={
        "console_scripts": [
            "cache-leak=cache_leak.src.cli:main",
        ],
    },
)
