import ast
import os
import re
from pathlib import Path

from setuptools import find_packages, setup

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()


def get_package_version():
    with open(Path(os.path.dirname(os.path.abspath(__file__))) / "paired_resolution" / "__init__.py", "r") as f:
        version_match = re.search(r"^__version__\s*=\s*(.*)$", f.read(), re.MULTILINE)
    public_version = ast.literal_eval(version_match.group(1))
    local_version = os.environ.get("PAIRED_RESOLUTION_LOCAL_VERSION")
    if local_version:
        return f"{public_version}+{local_version}"
    else:
        return str(public_version)


setup(
    name="paired_resolution",
    version=get_package_version(),
    packages=find_packages(
        exclude=(
            "build",
            "tests",
            "dist",
            "docs",
            "benchmarks",
            "paired_resolution.egg-info",
        )
    ),
    description="Resolution diagnostics for paired model comparisons",
    long_description=long_description,
    long_description_content_type="text/markdown",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: Apache Software License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.9",
    install_requires=[
        "torch",
        "packaging",
        "einops",
        "numpy",
        "scipy",
        "pandas>=2.1",
    ],
    entry_points={"console_scripts": ["paired-resolution = paired_resolution.cli:main"]},
)
