"""Multi-user tiled 360-degree VR streaming simulator over indoor mmWave cells.

Library layout:

- ``scenario``   theater geometry, tile grids, poses, traces
- ``channel``    indoor mmWave propagation, antennas, SINR, rates
- ``predictor``  GRU viewport inference plus a calibrated synthetic stand-in
- ``clustering`` viewport+seat distance and average-linkage partitioning
- ``lyapunov``   queue dynamics and closed-form admission control
- ``matching``   deferred-acceptance assignment of cells to user clusters
- ``simcore``    the slot loop, schemes, and per-frame metrics
- ``config``     run configuration and scenario presets
- ``cli``        ``vrmcast run|sweep|preset-list``
"""

__version__ = "0.1.0"
