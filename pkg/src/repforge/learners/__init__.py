from .forest import ForestModel, ForestParams, bootstrap_indices, feature_importance, forest_fit, forest_predict, tree_seeds
from .gbt import GbtModel, gbt_fit, gbt_predict
from .linear import LinearModel, elastic_net_fit, logistic_fit, logistic_loss_grad, softmax
from .serialize import load_model, model_from_dict, model_to_dict, save_model, schema_hash
from .tree import LearnerError, Tree, tree_fit

__all__ = [
    "LearnerError", "Tree", "tree_fit", "ForestModel", "ForestParams", "forest_fit", "forest_predict",
    "feature_importance", "bootstrap_indices", "tree_seeds", "GbtModel", "gbt_fit", "gbt_predict",
    "LinearModel", "logistic_fit", "logistic_loss_grad", "elastic_net_fit", "softmax",
    "save_model", "load_model", "model_to_dict", "model_from_dict", "schema_hash",
]
