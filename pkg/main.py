"""Punto de entrada principal del CLI de nodalkit."""
from __future__ import annotations

import sys

from nodalkit.api.cli import run

if __name__ == "__main__":
    raise SystemExit(run(sys.argv[1:]))
