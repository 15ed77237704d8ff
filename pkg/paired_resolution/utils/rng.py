"""Deterministic per-task random streams.

Every randomized routine takes a master seed and derives one torch.Generator per
independent task (trial, bootstrap chunk, calibration cell) from (seed, *index).
Results therefore do not depend on the order tasks are evaluated in.
"""

import numpy as np
import torch


def task_generator(seed, *index):
    state = np.random.SeedSequence([int(seed), *(int(i) for i in index)]).generate_state(2, dtype=np.uint32)
    generator = torch.Generator(device="cpu")
    generator.manual_seed((int(state[0]) << 31) | (int(state[1]) >> 1))
    return generator
