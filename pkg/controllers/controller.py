import numpy as np
from dataclasses import dataclass, field
from src.logger import Logger
logger = Logger.get_logger(__name__)

SPEED_TOLERANCE = 1e-9


def _zeros():
    return np.zeros(3)


@dataclass
class ControllerCommand:
    """Cartesian velocity command of one high-level step plus diagnostics.

    Attributes:
        v (np.ndarray): Commanded EE velocity in m/s (world frame).
        grad_target (np.ndarray): Normalized target-cost gradient.
        grad_force (np.ndarray): Normalized force-cost gradient.
        grad_h (np.ndarray): Weighted objective gradient.
        contact_flag (bool): Whether the window counted as contact.
    """
    v: np.ndarray
    grad_target: np.ndarray = field(default_factory=_zeros)
    grad_force: np.ndarray = field(default_factory=_zeros)
    grad_h: np.ndarray = field(default_factory=_zeros)
    contact_flag: bool = False


def validate_controller_command(func):
    def wrapper(self, *args, **kwargs):
        command = func(self, *args, **kwargs)
        if not isinstance(command, ControllerCommand):
            raise TypeError(f"Output should be a ControllerCommand but is {type(command).__name__}")
        v = np.asarray(command.v)
        if v.shape != (3,):
            raise ValueError(f"Command velocity should have shape (3,) but has {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"Command velocity should be finite but is {v}")
        speed = np.linalg.norm(v)
        if speed > self.alpha + SPEED_TOLERANCE:
            raise ValueError(f"Command speed {speed} exceeds alpha {self.alpha}")
        return command
    return wrapper


class Controller:
    """
    The `Controller` class is the common interface of the high-level controllers.
    A controller turns the current EE position, the target and the tactile window of
    the last high-level period into a Cartesian velocity command.

    The class has these methods:

    - `step`: Computes the next command. It is decorated with `validate_controller_command`,
      which checks the command type, that the velocity is a finite 3-vector and that its
      norm does not exceed `alpha`. This method should not be overridden by subclasses.
      Instead, subclasses should implement `_step`.

    - `reset`: Clears internal state between trials. Stateless controllers keep the default.

    Subclasses set `NAME`, which is the identifier used in scenario files.
    """

    NAME = None

    def __init__(self, alpha):
        if not alpha > 0:
            raise ValueError(f"alpha should be positive but is {alpha}")
        self.alpha = float(alpha)

    def _step(self, x_k, x_target, window, dt, ee_rotation):
        raise NotImplementedError("Subclasses should implement the _step method")

    def reset(self):
        pass

    @validate_controller_command
    def step(self, x_k, x_target, window, dt, ee_rotation=None):
        """Computes the velocity command for the next high-level period.

        Args:
            x_k (array-like): Current EE position (m).
            x_target (array-like): Target position (m).
            window (TactileWindow): Tactile window of the last period.
            dt (float): High-level period (s).
            ee_rotation (np.ndarray, optional): EE orientation; identity if omitted.

        Returns:
            ControllerCommand: The validated command.
        """
        R = np.eye(3) if ee_rotation is None else np.asarray(ee_rotation, dtype=float)
        return self._step(np.asarray(x_k, dtype=float), np.asarray(x_target, dtype=float), window, dt, R)
