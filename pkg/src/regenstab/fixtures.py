"""Built-in example systems.

``paper_system`` is an internally unstable plant ``dx/dt = A x + B u`` with
a failure-prone state feedback ``u = K x``: mode 1 runs the closed loop
``A + B K``, mode 2 the open loop ``A``. The closed-loop matrix is
recomputed on every call rather than stored.
"""

import numpy as np

from .process import DelayedSwitchModel, MaintenanceModel, SwitchedSystem

PLANT_A = np.array([[-0.4, 0.2], [-0.1, 0.5]])
PLANT_B = np.array([[0.0], [1.0]])
GAIN_K = np.array([[-0.1, -1.6]])
PAPER_RATE = 1.0
PAPER_DELTA = 0.1
PAPER_DEGREE = 2

for _arr in (PLANT_A, PLANT_B, GAIN_K):
    _arr.setflags(write=False)


def closed_loop():
    return PLANT_A + PLANT_B @ GAIN_K


def paper_system():
    return SwitchedSystem({1: closed_loop(), 2: PLANT_A})


def paper_model(T, delta=PAPER_DELTA, rate=PAPER_RATE):
    return MaintenanceModel(T=T, delta=delta, rate=rate)


def rotation_system():
    """Two modes: a rank-one Metzler mode and a clockwise rotation (not Metzler)."""
    A1 = 0.5 * np.array([[1.0, 1.0], [1.0, 1.0]])
    A2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return SwitchedSystem({1: A1, 2: A2})


def rotation_model(T=2.0):
    return DelayedSwitchModel(T)
