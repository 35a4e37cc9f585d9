"""
Event-, self- and time-triggered sampling side by side
======================================================

The same random starts under the three schedulers and three clock ranges.
A smaller sample than the full 100-run campaign, so it finishes in a few
seconds; the CLI ``campaign`` command runs the full grid.
"""

# %%
import numpy as np

from etcoord.analysis import campaign_aggregate, run_metrics
from etcoord.cli import execute, resolve_config, summary_table

base = resolve_config("rendezvous")
runs = 5

# %%
cells = []
for scheme in ("etc", "stc", "ttc"):
    for b in (1.0, 10.0, 100.0):
        sc = base.with_overrides(scheme=scheme, b=b)
        metrics = [run_metrics(execute(sc, r), r) for r in range(runs)]
        cells.append(campaign_aggregate(metrics))

print(summary_table(cells))

# %% [markdown]
# Larger b means fewer events. Time triggering pays for its state-independent
# period with the most events, and self triggering sits close to event
# triggering while only needing information available at the last update.

# %%
by = {(c.scheme, c.b): c.mean_events for c in cells}
for b in (1.0, 10.0, 100.0):
    print(f"b={b:>5g}: ETC/TTC = {by['etc', b] / by['ttc', b]:.3f}, STC/TTC = {by['stc', b] / by['ttc', b]:.3f}")
