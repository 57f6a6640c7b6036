"""Residual sources that can feed the controller, and their registry."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from numpy.typing import NDArray

from .dynamics import SensorFrame, VehicleState
from .indi import (
    FilterNotWarmError,
    IndiState,
    ResidualEstimate,
    estimate_residual,
    estimate_residual_pwm,
    na_indi_residual,
)
from .learning.mlp import MlpModel, mlp_forward
from .mathcore import Vec3

# controller variant -> residual stream it consumes
CONTROLLER_STREAMS: Dict[str, str] = {
    "lee": "none",
    "indi": "indi",
    "indi_pwm": "indi_pwm",
    "ilndi": "nn",
    "na_indi": "na_indi",
    "true": "true",
}
NETWORK_CONTROLLERS = ("ilndi", "na_indi")


@dataclass
class EstimationContext:
    """Inputs available to every residual source at one control tick."""

    frame: SensorFrame
    state: VehicleState
    indi: IndiState
    true_residual: Tuple[Vec3, Vec3]
    features: NDArray
    results: Dict[str, ResidualEstimate] = field(default_factory=dict)


class ResidualSource(ABC):
    """Base class for one residual stream."""

    def __init__(self, name: str):
        """Initialize source with its stream name."""
        self.name = name

    def estimate(self, ctx: EstimationContext) -> ResidualEstimate:
        """Estimate once per tick; zero while the filters warm up."""
        if self.name in ctx.results:
            return ctx.results[self.name]
        try:
            result = self._estimate(ctx)
        except FilterNotWarmError:
            result = ResidualEstimate.zero(self.name, ctx.frame.timestamp)
        ctx.results[self.name] = result
        return result

    @abstractmethod
    def _estimate(self, ctx: EstimationContext) -> ResidualEstimate:
        pass


class NoResidual(ResidualSource):
    """Plain geometric control: no compensation."""

    def __init__(self) -> None:
        super().__init__("none")

    def _estimate(self, ctx: EstimationContext) -> ResidualEstimate:
        return ResidualEstimate.zero("none", ctx.frame.timestamp)


class TrueResidual(ResidualSource):
    """Ground truth from the simulator."""

    def __init__(self, name: str = "true") -> None:
        super().__init__(name)

    def _estimate(self, ctx: EstimationContext) -> ResidualEstimate:
        force, torque = ctx.true_residual
        return ResidualEstimate(force.copy(), torque.copy(), self.name, ctx.frame.timestamp)


class IndiSource(ResidualSource):
    """Filtered inversion with the RPM-based wrench."""

    def __init__(self) -> None:
        super().__init__("indi")

    def _estimate(self, ctx: EstimationContext) -> ResidualEstimate:
        return estimate_residual(ctx.indi, ctx.frame, ctx.state)


class IndiPwmSource(ResidualSource):
    """Filtered inversion with the PWM-based wrench."""

    def __init__(self) -> None:
        super().__init__("indi_pwm")

    def _estimate(self, ctx: EstimationContext) -> ResidualEstimate:
        return estimate_residual_pwm(ctx.indi, ctx.frame, ctx.state)


class RawIndiSource(ResidualSource):
    """Unfiltered inversion, logged for comparison."""

    def __init__(self) -> None:
        super().__init__("indi_raw")

    def _estimate(self, ctx: EstimationContext) -> ResidualEstimate:
        ctx.indi.ingest(ctx.frame)
        force, torque = ctx.indi.raw_estimate(ctx.state)
        return ResidualEstimate(force, torque, "indi_raw", ctx.frame.timestamp)


class NetworkSource(ResidualSource):
    """Learned prediction from the current state and PWM."""

    def __init__(self, model: MlpModel) -> None:
        super().__init__("nn")
        self.model = model

    def _estimate(self, ctx: EstimationContext) -> ResidualEstimate:
        return ResidualEstimate.from_vector(mlp_forward(self.model, ctx.features), "nn", ctx.frame.timestamp)


class NaIndiSource(ResidualSource):
    """Network prediction plus INDI on the remainder."""

    def __init__(self, network: ResidualSource) -> None:
        super().__init__("na_indi")
        self.network = network

    def _estimate(self, ctx: EstimationContext) -> ResidualEstimate:
        prediction = self.network.estimate(ctx)
        return na_indi_residual(ctx.indi, ctx.frame, ctx.state, prediction)


class SourceRegistry:
    """Named residual sources evaluated together at each tick."""

    def __init__(self, sources: List[ResidualSource]):
        """Initialize registry with sources."""
        self.sources: Dict[str, ResidualSource] = {source.name: source for source in sources}

    def register(self, source: ResidualSource) -> SourceRegistry:
        """Register a source, replacing one with the same name."""
        self.sources[source.name] = source
        return self

    def unregister(self, name: str) -> SourceRegistry:
        """Remove a source."""
        self.sources.pop(name, None)
        return self

    def get(self, name: str) -> Optional[ResidualSource]:
        """Get source by stream name."""
        return self.sources.get(name)

    def names(self) -> List[str]:
        """Registered stream names."""
        return list(self.sources)

    def estimate_all(self, ctx: EstimationContext) -> Dict[str, ResidualEstimate]:
        """Evaluate every source once."""
        return {name: source.estimate(ctx) for name, source in self.sources.items()}


def build_registry(model: Optional[MlpModel] = None, oracle_network: bool = False) -> SourceRegistry:
    """
    Every stream that can be computed with the given network.

    With oracle_network the ground truth stands in for the network.
    """
    registry = SourceRegistry(
        [NoResidual(), TrueResidual(), IndiSource(), IndiPwmSource(), RawIndiSource()]
    )
    network: Optional[ResidualSource] = None
    if oracle_network:
        network = TrueResidual("nn")
    elif model is not None:
        network = NetworkSource(model)
    if network is not None:
        registry.register(network).register(NaIndiSource(network))
    return registry
