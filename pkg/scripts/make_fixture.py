"""Write the synthetic HMD-format fixture used by the tests and the CLI demo.

    python scripts/make_fixture.py [out_dir]

Also writes ``synthetic_surface.csv``, the 60-year x 50-age Lee-Carter surface
used by the end-to-end backtest check.
"""

from __future__ import annotations

import sys
from pathlib import Path

from sigmort.io import write_csv_matrix
from sigmort.synthetic import lee_carter_surface, write_hmd_fixture


def main(out_dir: str = "tests/data") -> None:
    out = Path(out_dir)
    for path in write_hmd_fixture(out, country="SYN", seed=11):
        print(f"wrote {path}")
    surface = lee_carter_surface(seed=2024)
    write_csv_matrix(surface, out / "synthetic_surface.csv", header_lines=["synthetic Lee-Carter surface, seed=2024"])
    print(f"wrote {out / 'synthetic_surface.csv'}")


if __name__ == "__main__":
    main(*sys.argv[1:])
