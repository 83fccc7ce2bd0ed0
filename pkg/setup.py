from setuptools import setup, find_packages
import pathlib
import shutil


# removing dist/ and delayfront.egg-info/ directories
shutil.rmtree("dist", ignore_errors=True)
shutil.rmtree("delayfront.egg-info", ignore_errors=True)


setup(
    name="delayfront",
    version="0.1.0",
    description="Traveling fronts of delayed reaction-diffusion equations: minimal speeds, profiles and simulation",
    long_description=pathlib.Path("README.md").read_text(),
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=["tests", "tests.*"]),
    include_package_data=True,
    exclude_package_data={
        '': ['__pycache__', '*.pyc', '*.pyo']
    },
    python_requires=">=3.9",
    install_requires=[
        "networkx==3.1",
        "pydantic>=2",
        "rich",
        "sqlalchemy",
        "numpy",
        "scipy"
    ],
    entry_points={
        "console_scripts": ["delayfront=delayfront.cli:main"]
    },
)
