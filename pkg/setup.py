from setuptools import setup, find_packages

setup(
    name="xmodal",
    version="0.2.0",
    packages=find_packages(exclude=["tests", "examples*"]),
    install_requires=[
        'numpy>=1.24.0',
        'scipy>=1.10.0',
        'scikit-learn>=1.2.0',
        'pandas>=2.0.0',
        'pyyaml>=6.0.0',
        'python-dotenv>=1.0.0',
        'pytest>=7.0.0',
    ],
    entry_points={
        'console_scripts': [
            'xmodal=src.main:main',
        ],
    },
)
