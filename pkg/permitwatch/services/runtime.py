import os
from dataclasses import dataclass

from ..settings import DATA_DIR


@dataclass
class RuntimeConfig:
    data_dir: str
    seed: int | None = None
    workers: int = 1
    log_level: str = "INFO"


def resolve_seed(flag: int | None, default: int = 0) -> int:
    """PS_SEED in the environment wins over the --seed flag."""
    env = (os.environ.get("PS_SEED") or "").strip()
    if env:
        try:
            return int(env)
        except ValueError:
            pass
    return int(flag) if flag is not None else default


def get_runtime_config() -> RuntimeConfig:
    try:
        workers = int(os.environ.get("PW_WORKERS", "1") or 1)
    except ValueError:
        workers = 1
    env_seed = (os.environ.get("PS_SEED") or "").strip()
    return RuntimeConfig(
        data_dir  = os.environ.get("PW_DATA_DIR") or DATA_DIR,
        seed      = int(env_seed) if env_seed.lstrip("-").isdigit() else None,
        workers   = max(1, workers),
        log_level = (os.environ.get("LOG_LEVEL") or "INFO").upper(),
    )
