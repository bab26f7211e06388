# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt


class HdloError(Exception):
    """Base class for every error raised by hdlo_planning."""


class AngleNearPi(HdloError, ArithmeticError):
    """Relative rotation is too close to pi for the logarithm chart."""

    def __init__(self, angle, margin):
        super().__init__(f"rotation angle {angle:.12g} is within {margin:g} of pi")
        self.angle = angle
        self.margin = margin


class SingularTangent(HdloError, ArithmeticError):
    """Tangent operator of the exponential map is not invertible."""

    def __init__(self, angle, margin):
        super().__init__(f"rotation angle {angle:.12g} is within {margin:g} of a nonzero multiple of 2*pi")
        self.angle = angle
        self.margin = margin


class OutOfRange(HdloError, ValueError):
    """An abscissa or query point lies outside its admissible interval."""


class MalformedAssembly(HdloError, ValueError):
    """Assembly description is inconsistent; ``path`` names the offending element."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class RigidLink(HdloError, ValueError):
    """A deformable-only quantity was requested for a rigid link."""


class NoConvergence(HdloError, ArithmeticError):
    def __init__(self, iterations, residual, message="Newton iteration did not converge"):
        super().__init__(f"{message} after {iterations} iterations (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class GoalUnreachable(HdloError):
    def __init__(self, distance, tolerance, state=None):
        super().__init__(f"goal log-distance {distance:.3e} exceeds tolerance {tolerance:.1e}")
        self.distance = distance
        self.tolerance = tolerance
        self.state = state


class DimensionMismatch(HdloError, ValueError):
    """Array arguments do not agree in shape."""


class SceneFileError(HdloError, ValueError):
    """Scene, goal or result file could not be parsed."""
