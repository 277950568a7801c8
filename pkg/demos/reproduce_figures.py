"""Write CSV and SVG files for every figure panel at desk scale.

usage: python demos/reproduce_figures.py [outdir] [--quick]
"""

import sys
from pathlib import Path

from fpsum import experiments as X

args = [a for a in sys.argv[1:] if not a.startswith("--")]
quick = "--quick" in sys.argv
out = Path(args[0] if args else "figures")
out.mkdir(parents=True, exist_ok=True)

for fig in ("fig1", "fig2", "fig3"):
    for panel in ("left", "right"):
        grid = (10, 100, 5010) if quick else None
        rows = X.run_figure(X.figure_config(fig, panel, grid=grid))
        stem = out / f"{fig}-{panel}"
        X.write_outputs(rows, stem.with_suffix(".csv"), stem.with_suffix(".svg"), f"{fig} {panel}")
        print(f"wrote {stem}.csv/.svg ({len(rows)} rows)")
