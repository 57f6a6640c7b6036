#!/usr/bin/env python3
"""Setup script for Quad Residual Lab."""

from setuptools import find_packages, setup

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="quad-residual-lab",
    version="0.1.0",
    author="Quad Residual Lab Contributors",
    description="Quadrotor residual force and torque estimation: INDI, learned residuals and their hybrid",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests*", "examples*"]),
    package_data={"quad_residual_lab": ["py.typed"]},
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering",
    ],
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.10",
        "pandas>=1.5",
        "pyyaml>=6.0",
        "typing-extensions>=4.0.0",
        "pydantic>=2.0.0",
    ],
    extras_require={
        "dev": [
            "pytest>=7.0.0",
            "black>=23.0.0",
            "isort>=5.12.0",
            "flake8>=6.0.0",
            "mypy>=1.0.0",
        ],
    },
    entry_points={"console_scripts": ["quad-lab = quad_residual_lab.cli:main"]},
    keywords=[
        "quadrotor",
        "indi",
        "geometric-control",
        "residual-learning",
        "simulation",
        "payload",
    ],
)
