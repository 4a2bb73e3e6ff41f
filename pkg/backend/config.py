"""Runtime configuration read from the environment (and an optional .env file)."""

import os
from dataclasses import dataclass, field
from typing import List

from dotenv import load_dotenv

load_dotenv()

DEFAULT_BIND = "127.0.0.1:8000"
DEFAULT_SERVER_URL = "http://127.0.0.1:8000"


def _flag(value: str) -> bool:
    return value.strip().lower() in {"1", "true", "yes", "on"}


@dataclass(frozen=True)
class Settings:
    bind: str = DEFAULT_BIND
    store_root: str = "./expdb_store"
    log_level: str = "INFO"
    log_json: bool = False
    cors_origins: List[str] = field(default_factory=lambda: ["*"])

    @classmethod
    def from_env(cls) -> "Settings":
        return cls(
            bind=os.getenv("EXPDB_BIND", DEFAULT_BIND),
            store_root=os.getenv("EXPDB_STORE", "./expdb_store"),
            log_level=os.getenv("EXPDB_LOG_LEVEL", "INFO").upper(),
            log_json=_flag(os.getenv("EXPDB_LOG_JSON", "false")),
            cors_origins=os.getenv("CORS_ORIGINS", "*").split(","),
        )

    @property
    def host(self) -> str:
        return split_bind(self.bind)[0]

    @property
    def port(self) -> int:
        return split_bind(self.bind)[1]


def split_bind(bind: str) -> tuple:
    host, sep, port = bind.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"bind address must look like host:port, got {bind!r}")
    return host or "0.0.0.0", int(port)


def server_url_from_env() -> str:
    return os.getenv("EXPDB_SERVER", DEFAULT_SERVER_URL)
