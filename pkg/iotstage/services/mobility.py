"""
Built-in mobility domain simulator

Entities move along polyline routes at commanded constant speeds. Positions
feed the network snapshot; applications stop, resume and re-speed entities
through commands applied at window boundaries.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Optional, Protocol, Sequence

import numpy as np

from iotstage.models.scenario import NS_PER_S, EntitySpec, Position
from iotstage.utils.exceptions import UnknownEntityError

logger = logging.getLogger(__name__)


class EntityState(str, Enum):
    MOVING = "Moving"
    STOPPED = "Stopped"
    FINISHED = "Finished"


class CommandKind(str, Enum):
    STOP = "Stop"
    RESUME = "Resume"
    SET_SPEED = "SetSpeed"


@dataclass(frozen=True)
class EntityCommand:
    """Application request to change an entity's motion"""

    entity: str
    kind: CommandKind
    issued_at: int
    value: Optional[float] = None

    def __post_init__(self):
        if self.kind == CommandKind.SET_SPEED and (self.value is None or self.value < 0):
            raise ValueError("SetSpeed needs a value >= 0")


class DomainSimulator(Protocol):
    """What the coordinator needs from a domain environment simulator."""

    def entity_ids(self) -> Sequence[str]: ...

    def step(self, dt: int) -> Dict[str, Position]: ...

    def apply_command(self, command: EntityCommand) -> bool: ...

    def position_of(self, entity_id: str) -> Position: ...

    def state_of(self, entity_id: str) -> EntityState: ...


class Entity:
    """Mobile object on a polyline route"""

    def __init__(self, spec: EntitySpec):
        self.id = spec.id
        self.speed = float(spec.speed)
        self.progress = 0.0

        points = np.asarray(spec.route, dtype=float)
        self._points = points
        legs = np.hypot(*np.diff(points, axis=0).T)
        self._cumulative = np.concatenate(([0.0], np.cumsum(legs)))
        self.length = float(self._cumulative[-1])
        self.state = EntityState.FINISHED if self.length == 0 else EntityState.MOVING

    @property
    def route(self) -> List[Position]:
        return [Position(float(x), float(y)) for x, y in self._points]

    def advance(self, seconds: float) -> float:
        """Move along the route; returns the distance actually covered."""
        if self.state != EntityState.MOVING:
            return 0.0
        before = self.progress
        self.progress = min(self.progress + self.speed * seconds, self.length)
        if self.progress >= self.length:
            self.progress = self.length
            self.state = EntityState.FINISHED
        return self.progress - before

    def position(self) -> Position:
        """Point at arc length `progress` along the polyline."""
        if self.progress >= self.length:
            x, y = self._points[-1]
            return Position(float(x), float(y))
        leg = int(np.searchsorted(self._cumulative, self.progress, side="right")) - 1
        leg = min(max(leg, 0), len(self._points) - 2)
        start = self._cumulative[leg]
        span = self._cumulative[leg + 1] - start
        fraction = 0.0 if span == 0 else (self.progress - start) / span
        x0, y0 = self._points[leg]
        x1, y1 = self._points[leg + 1]
        return Position(float(x0 + (x1 - x0) * fraction), float(y0 + (y1 - y0) * fraction))


class MobilitySimulator:
    """Constant-speed kinematics for all scenario entities"""

    def __init__(self, specs: Iterable[EntitySpec]):
        self.entities: Dict[str, Entity] = {spec.id: Entity(spec) for spec in specs}

    def entity_ids(self) -> List[str]:
        return sorted(self.entities)

    def entity(self, entity_id: str) -> Entity:
        try:
            return self.entities[entity_id]
        except KeyError:
            raise UnknownEntityError(f"no entity {entity_id!r}") from None

    def step(self, dt: int) -> Dict[str, Position]:
        """
        Advance every Moving entity by dt nanoseconds

        Returns:
            Positions of all entities after the step
        """
        if dt <= 0:
            raise ValueError("step needs dt > 0")
        seconds = dt / NS_PER_S
        positions = {}
        for entity_id in self.entity_ids():
            entity = self.entities[entity_id]
            entity.advance(seconds)
            positions[entity_id] = entity.position()
        return positions

    def apply_command(self, command: EntityCommand) -> bool:
        """
        Apply a Stop, Resume or SetSpeed command

        Returns:
            False when the entity already finished (command ignored)

        Raises:
            UnknownEntityError: the entity does not exist
        """
        entity = self.entity(command.entity)
        if entity.state == EntityState.FINISHED:
            logger.warning(
                "Command after finish ignored",
                extra={"entity": entity.id, "command": command.kind.value},
            )
            return False
        if command.kind == CommandKind.STOP:
            entity.state = EntityState.STOPPED
        elif command.kind == CommandKind.RESUME:
            entity.state = EntityState.MOVING
        else:
            entity.speed = float(command.value)
        return True

    def position_of(self, entity_id: str) -> Position:
        return self.entity(entity_id).position()

    def state_of(self, entity_id: str) -> EntityState:
        return self.entity(entity_id).state
