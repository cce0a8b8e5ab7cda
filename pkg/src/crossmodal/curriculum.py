import logging
from typing import Optional

from .base_strategy import BaseStrategy, Phase


class CurriculumController:
    """Tracks the active freeze/unfreeze phase of a strategy across iterations"""

    def __init__(self, strategy: BaseStrategy):
        self.strategy = strategy
        self.logger = logging.getLogger(__name__)
        self.phase: Optional[Phase] = None
        self.unfrozen_at: Optional[int] = None

    def update(self, iteration: int) -> Phase:
        """
        Advance to ``iteration`` and return its phase; logs every transition
        """
        phase = self.strategy.phase_at(iteration)
        if phase is not self.phase:
            if self.phase is Phase.FROZEN and phase is Phase.FREE:
                self.unfrozen_at = iteration
                self.logger.info(f"Unfreezing shared trunk at iteration {iteration} "
                                 f"({self.strategy.kind.value})")
            else:
                self.logger.info(f"Starting {phase.value} phase at iteration {iteration} "
                                 f"({self.strategy.kind.value})")
            self.phase = phase
        return phase

    @property
    def frozen(self) -> bool:
        return self.phase is Phase.FROZEN
