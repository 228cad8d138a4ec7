from setuptools import setup, find_packages

with open("requirements.txt") as f:
    requirements=[line.split("#")[0].strip() for line in f.read().splitlines()]
    requirements=[line for line in requirements if line]

setup(
    name="xcelram-sim",
    version="0.1",
    author="Arnab",
    packages=find_packages(exclude=["tests", "examples*"]),
    py_modules=["app"],
    install_requires=requirements,
    python_requires=">=3.10",
    entry_points={"console_scripts": ["xcelram=app:main"]},
)
