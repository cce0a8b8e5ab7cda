import logging
import logging.config
from pathlib import Path
from typing import Optional, Union

LOGGING_INI = Path(__file__).resolve().parents[2] / "config" / "logging.ini"
FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATEFMT = "%Y-%m-%d %H:%M:%S"

_run_handler: Optional[logging.Handler] = None


def setup_logging(config_path: Union[str, Path] = LOGGING_INI, level: Optional[str] = None) -> None:
    """Apply the logging.ini configuration, falling back to a console handler."""
    config_path = Path(config_path)
    if config_path.exists():
        logging.config.fileConfig(config_path, disable_existing_loggers=False)
    else:
        logging.basicConfig(format=FORMAT, datefmt=DATEFMT, level=logging.INFO)
    if level is not None:
        logging.getLogger("src").setLevel(level.upper())


def attach_run_log(run_dir: Union[str, Path]) -> Path:
    """Mirror log records into <run_dir>/logs/xmodal.log."""
    global _run_handler
    path = Path(run_dir) / "logs" / "xmodal.log"
    path.parent.mkdir(parents=True, exist_ok=True)
    root = logging.getLogger()
    if _run_handler is not None:
        root.removeHandler(_run_handler)
        _run_handler.close()
    _run_handler = logging.FileHandler(path, mode="a", encoding="utf-8")
    _run_handler.setFormatter(logging.Formatter(FORMAT, DATEFMT))
    root.addHandler(_run_handler)
    return path


def detach_run_log() -> None:
    global _run_handler
    if _run_handler is not None:
        logging.getLogger().removeHandler(_run_handler)
        _run_handler.close()
        _run_handler = None
