from .base_problem import Problem
from .quadratic import QuadraticProblem
from .ridge import RidgeProblem

__all__ = ["Problem", "QuadraticProblem", "RidgeProblem"]
