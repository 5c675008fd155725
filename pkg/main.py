#!/usr/bin/env python3
"""
ENL Toolkit - Main Entry Point
Điểm vào: python main.py <simulate|bias|estimate|sample> [tùy chọn]
"""

import sys
from typing import Optional, Sequence

from cli import ENLToolCLI


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Chạy CLI với argv (mặc định sys.argv[1:]) và trả về exit code"""
    return ENLToolCLI().run(argv)


if __name__ == "__main__":
    sys.exit(main())
