"""Configuration, logging, binary I/O helpers and run-directory bookkeeping.

Submodules are imported directly (``from src.utils.config import ...``);
this package imports nothing so that low-level modules can use
``utils.binary`` without pulling in the configuration layer.
"""
