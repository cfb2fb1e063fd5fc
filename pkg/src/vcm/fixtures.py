"""Worked lattice: 8 tokens, 2 concepts, forward table to 3 decimals."""

import numpy as np

WORKED_VERSION = "1"

WORKED_L = 2

WORKED_P_BLANK = (0.8, 0.6, 0.2, 0.3, 0.7, 0.9, 0.1, 0.3)
WORKED_P_KEEP = (0.2, 0.4, 0.8, 0.7, 0.3, 0.1, 0.9, 0.7)

# rows are steps t = 1..8, columns are states l = 1..5
WORKED_ALPHA = (
    (0.800, 0.200, 0.0, 0.0, 0.0),
    (0.480, 0.400, 0.120, 0.0, 0.0),
    (0.096, 0.704, 0.104, 0.096, 0.0),
    (0.029, 0.560, 0.242, 0.140, 0.029),
    (0.020, 0.177, 0.562, 0.115, 0.118),
    (0.018, 0.020, 0.664, 0.068, 0.210),
    (0.002, 0.034, 0.068, 0.659, 0.028),
    (0.001, 0.025, 0.031, 0.509, 0.206),
)

WORKED_TOTAL = 0.509 + 0.206

WORKED_DECIMALS = 3


def worked_probs() -> np.ndarray:
    return np.column_stack([WORKED_P_BLANK, WORKED_P_KEEP])


def worked_alpha() -> np.ndarray:
    return np.array(WORKED_ALPHA)
