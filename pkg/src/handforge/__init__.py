"""Parametric robot-hand generation, quasi-static grasp scoring and
TPE-driven co-design with SHAP analysis."""

__version__ = "0.1.0"
