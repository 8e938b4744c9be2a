from dataclasses import dataclass

from ..errors import InputError


@dataclass(frozen=True)
class NetSpec:
    """Two-layer MLP backbone shared by the training tasks."""

    hidden: int = 32
    activation: str = "tanh"
    gain: float = 1.0

    def __post_init__(self):
        if self.hidden < 1:
            raise InputError("hidden width must be >= 1")
        if self.activation not in ("tanh", "relu", "sigmoid"):
            raise InputError(f"unknown activation {self.activation!r}")
        if not self.gain > 0:
            raise InputError("gain must be positive")
