# tdlmc/config.py
#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import os
import sys
from pathlib import Path

# --- резолвинг корня проекта ---
PACKAGE_DIR = Path(__file__).resolve().parent
ROOT_DIR = PACKAGE_DIR.parent
if str(ROOT_DIR) not in sys.path:
    sys.path.append(str(ROOT_DIR))

# --- .env (опционально) ---
try:
    from dotenv import load_dotenv  # pip install python-dotenv
    load_dotenv(ROOT_DIR / ".env")
except Exception:
    pass


def _bool_env(name: str, default: str = "0") -> bool:
    return os.getenv(name, default).strip().lower() in ("1", "true", "yes", "on")


def _int_env(name: str, default: int) -> int:
    try:
        return int(os.getenv(name, str(default)))
    except ValueError:
        return default


# === Пути ===
CORPUS_DIR = Path(os.getenv("CORPUS_DIR", str(ROOT_DIR / "corpus")))

# === Обратная достижимость ===
MAX_ITERATIONS = _int_env("TDLMC_MAX_ITERATIONS", 200)
MAX_SET_SIZE = _int_env("TDLMC_MAX_SET_SIZE", 100000)

# === Симулятор ===
SIM_STEPS = _int_env("TDLMC_SIM_STEPS", 1000)

# === Ограниченный перебор (оракул) ===
MAX_ATOMS = _int_env("TDLMC_MAX_ATOMS", 6)
VALUE_CAP = _int_env("TDLMC_VALUE_CAP", 10)
MAX_CONFIGS = _int_env("TDLMC_MAX_CONFIGS", 200000)

# === Исполнение ===
THREADS = max(1, _int_env("TDLMC_THREADS", 1))
PROGRESS = _bool_env("TDLMC_PROGRESS")
LOG_LEVEL = os.getenv("TDLMC_LOG_LEVEL", "WARNING").upper()
