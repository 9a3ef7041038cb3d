from setuptools import setup

setup(
    name="tlflow",
    version="0.1.0",
    packages=["tlflow", "tlflow.test"],
    package_data={"tlflow": ["corpus/*.tlv"]},
    description="Transaction-level flow compiler and cycle simulator for "
    "a TL-Verilog subset",
    install_requires=[
        "argparse",
        "networkx>=2.8",
        "pandas>=1.5",
        "pytest",
        "tabulate",
    ],
    entry_points={"console_scripts": ["tlflow=tlflow.cli:main"]},
)
