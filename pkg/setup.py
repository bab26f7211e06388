from setuptools import setup, find_packages

with open('requirements.txt') as f:
    requirements = f.read().splitlines()

setup(
    name='hdlo_planning',
    version='0.1.0',
    packages=find_packages(),
    package_data={'hdlo_planning': ['scenes/*.json']},
    include_package_data=True,
    install_requires=requirements,
    entry_points={'console_scripts': ['hdlo = hdlo_planning.cli:main']},
)
