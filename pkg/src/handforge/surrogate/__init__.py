from .analysis import Dataset, analyze, group_importance
from .forest import ForestConfig, RegressionForest, Tree, fit_forest
from .treeshap import ShapExplanation, shap_values, tree_shap

__all__ = [
    "Dataset",
    "ForestConfig",
    "RegressionForest",
    "ShapExplanation",
    "Tree",
    "analyze",
    "fit_forest",
    "group_importance",
    "shap_values",
    "tree_shap",
]
