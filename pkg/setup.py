from setuptools import setup, find_packages

setup(
    name="maxloss",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    install_requires=[
        "typer>=0.9.0",
        "click>=8.0",
        "rich>=13.0.0",
        "numpy>=1.21",
        "scipy>=1.9",
    ],
    extras_require={
        "test": ["pytest>=7.0", "hypothesis>=6.0"],
    },
    entry_points={
        "console_scripts": [
            "maxloss=maxloss.cli:run",
        ],
    },
    python_requires=">=3.8",
    description="Ball-oracle accelerated solvers for minimising the maximum of N convex losses",
)
