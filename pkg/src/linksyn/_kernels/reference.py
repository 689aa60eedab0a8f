"""Pure-numpy trilateration sweep (fallback backend).

Vectorizes each solve step over the whole motor-angle grid. The scalar
arithmetic (operation order, clamping, tolerances) mirrors _sweep_cy.pyx
expression for expression; since every operation involved (+, -, *, /, sqrt,
comparisons) is correctly rounded per IEEE 754, both backends produce
bitwise-identical trajectories. Keep them in lockstep when editing.
"""
from __future__ import annotations

import numpy as np

DEGENERATE_TOL = 1e-9       # base distance below this -> degenerate step
COS_SLACK = 1e-12           # |cos phi| may exceed 1 by this before it is a defect

STATUS_OK = 0
STATUS_BRANCH_DEFECT = 1
STATUS_DEGENERATE = 2

BACKEND_NAME = "python"


def sweep(base, fixed_mask, pivot, motor, cos_t, sin_t, steps, g1, g2, branch):
    """Forward-simulate a dyadic linkage over a motor-angle grid.

    Args:
        base: (N, 2) float64 initial joint positions.
        fixed_mask: (N,) bool, True for grounded joints.
        pivot, motor: crank joint indices (motor rotates about pivot).
        cos_t, sin_t: (A,) float64 cos/sin of the motor angles.
        steps: (S, 3) int64 solve order rows (child, parent_i, parent_j).
        g1, g2: (S,) float64 link lengths child-parent_i, child-parent_j.
        branch: (S,) float64 +-1 branch signs.

    Returns:
        (positions, status, fail_step, fail_angle) where positions is
        (A, N, 2). On failure (status != 0) the position content is
        unspecified; fail_step/fail_angle locate the first failure in
        (angle, step) order. On success both indices are -1.
    """
    A = cos_t.shape[0]
    N = base.shape[0]
    S = steps.shape[0]
    pos = np.empty((A, N, 2), dtype=np.float64)

    for n in range(N):
        if fixed_mask[n]:
            pos[:, n, 0] = base[n, 0]
            pos[:, n, 1] = base[n, 1]

    px = base[pivot, 0]
    py = base[pivot, 1]
    cx = base[motor, 0] - px
    cy = base[motor, 1] - py
    pos[:, motor, 0] = px + (cos_t * cx - sin_t * cy)
    pos[:, motor, 1] = py + (sin_t * cx + cos_t * cy)

    active = np.ones(A, dtype=bool)
    fail_step = np.full(A, -1, dtype=np.int64)
    fail_kind = np.zeros(A, dtype=np.int64)

    lo = -1.0 - COS_SLACK
    hi = 1.0 + COS_SLACK

    with np.errstate(all="ignore"):
        for s in range(S):
            k = steps[s, 0]
            i = steps[s, 1]
            j = steps[s, 2]
            g1s = g1[s]
            g2s = g2[s]
            g1sq = g1s * g1s
            g2sq = g2s * g2s
            br = branch[s]

            xi = pos[:, i, 0]
            yi = pos[:, i, 1]
            dx = pos[:, j, 0] - xi
            dy = pos[:, j, 1] - yi
            l2 = dx * dx + dy * dy
            length = np.sqrt(l2)

            degenerate = active & (length < DEGENERATE_TOL)
            c = (l2 + g1sq - g2sq) / (2.0 * length * g1s)
            # NaN fails both comparisons, so it counts as a defect.
            defect = active & ~degenerate & ~((c >= lo) & (c <= hi))

            if degenerate.any() or defect.any():
                fail_step[degenerate] = s
                fail_kind[degenerate] = STATUS_DEGENERATE
                fail_step[defect] = s
                fail_kind[defect] = STATUS_BRANCH_DEFECT
                active &= ~(degenerate | defect)

            c = np.clip(c, -1.0, 1.0)
            sphi = br * np.sqrt(1.0 - c * c)
            ux = dx / length
            uy = dy / length
            pos[:, k, 0] = xi + g1s * (c * ux - sphi * uy)
            pos[:, k, 1] = yi + g1s * (sphi * ux + c * uy)

    if active.all():
        return pos, STATUS_OK, -1, -1
    failing = np.nonzero(fail_step >= 0)[0]
    a = int(failing[0])
    return pos, int(fail_kind[a]), int(fail_step[a]), a
