
from setuptools import setup, find_packages

setup(
    name="expdb_backend",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "tests.*"]),
    python_requires=">=3.9",
    install_requires=[
        "fastapi>=0.116",
        "uvicorn[standard]>=0.35",
        "pydantic>=2.7",
        "python-dotenv>=1.0",
        "requests>=2.32",
        "pandas>=2.2",
        "numpy>=2.0",
        "structlog>=24.4",
    ],
    entry_points={
        "console_scripts": [
            "expdb=backend.cli:main",
            "expdb-server=backend.main:main",
            "expdb-smoke=backend.smoke:main",
        ],
    },
)
