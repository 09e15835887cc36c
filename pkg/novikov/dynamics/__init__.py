"""
Initial data, time stepping and the characteristic flow
"""


class BlowUpError(RuntimeError):
    """Non-finite values after a step; carries the failure time"""

    def __init__(self, t: float, message: str = "", trajectory=None):
        super().__init__(message or f"Solution blew up at t={t:.6g}")
        self.t = t
        self.trajectory = trajectory
