"""
Wall-clock pacing against simulated time
"""

import time
from typing import Callable, Optional

from iotstage.models.scenario import NS_PER_S


class Pacer:
    """
    Keeps simulated time from running ahead of the wall clock

    Simulated time t maps to wall time start + t / rtf. With rtf None
    (fast mode) every wait returns immediately.
    """

    def __init__(
        self,
        rtf: Optional[float],
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if rtf is not None and rtf <= 0:
            raise ValueError("rtf must be positive")
        self.rtf = rtf
        self.clock = clock
        self.sleep = sleep
        self.started_at: Optional[float] = None

    @property
    def enabled(self) -> bool:
        return self.rtf is not None

    def start(self) -> None:
        self.started_at = self.clock()

    def wall_target(self, sim_t: int) -> float:
        return self.started_at + sim_t / NS_PER_S / self.rtf

    def wait_for(self, sim_t: int) -> Optional[int]:
        """
        Block until the wall clock reaches sim_t

        Returns:
            Lag behind the target in ns, None when pacing is off
        """
        if not self.enabled:
            return None
        if self.started_at is None:
            self.start()
        target = self.wall_target(sim_t)
        delay = target - self.clock()
        if delay > 0:
            self.sleep(delay)
        return max(0, int((self.clock() - target) * NS_PER_S))

    def elapsed(self) -> float:
        """Wall seconds since start."""
        return 0.0 if self.started_at is None else self.clock() - self.started_at
