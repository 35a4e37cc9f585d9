"""
How long can an edge wait?
==========================

Three answers to the same question, from most to least informed: replaying
the event-triggered clock along the recorded motion, the self-triggered
interval computed at the event from a velocity envelope, and the fixed
worst-case period.
"""

# %%
import numpy as np

from etcoord.cli import execute, resolve_config
from etcoord.triggering import replay_etc_interval, stc_interval, ttc_mate

sc = resolve_config("rendezvous").with_overrides(scheme="etc", b=10.0)
traj = execute(sc, run_index=7)
net = traj.network

# %% [markdown]
# Pick the third event on edge 2 and look forward from there.

# %%
ell = 1
t0 = traj.event_t[traj.event_edge == ell + 1][2]
i0 = int(np.flatnonzero(traj.t == t0)[-1])
z0 = traj.z[i0, ell:ell + 1]
dv0 = net.edge_velocity(traj.v[i0], ell)
clock = net.clocks[ell]

window = (traj.t >= t0) & (traj.t <= t0 + clock.linear_clock_time + 0.05)
t_win, idx = np.unique(traj.t[window], return_index=True)
replay = replay_etc_interval(t_win, traj.z[window][idx, ell], clock, net.law)
stc = stc_interval(z0, dv0, clock, net.models[0].incremental, net.law, (2, 2))
mate = ttc_mate(clock, net.law.global_grad_bound)

print(f"z = {z0[0]:.3f}, dv = {dv0[0]:.3f}")
print(f"replayed ETC interval {replay:.4f} s")
print(f"self-triggered bound  {stc:.4f} s")
print(f"time-triggered MATE   {mate:.4f} s")
print(f"clock without coupling {clock.linear_clock_time:.4f} s")
