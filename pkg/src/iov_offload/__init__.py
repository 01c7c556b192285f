"""Multi-agent computation offloading in a vehicle / RSU / MBS edge network.

Subpackages and modules:

* ``numkit``  -- matrix autodiff kernel, RMSProp, grad checking, checkpoints
* ``env``     -- the offloading world: mobility, tasks, latency, reward
* ``oracle``  -- exact enumeration and greedy baselines, policy evaluation
* ``agents``  -- shared per-agent utility network and exploration
* ``mixers``  -- VDN / state-hypernetwork / graph-embedded joint values
* ``trainer`` -- replay, bootstrap targets, the training loop
* ``harness`` -- experiment drivers, CSV/SVG outputs, command line
"""

__version__ = "0.1.0"
