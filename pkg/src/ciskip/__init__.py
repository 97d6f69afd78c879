"""Learn CI-skip decision trees with parameterized deep Q-learning."""
from .dataset import Dataset, Feature, FeatureSchema, Label, load_csv, write_csv
from .metrics import EvalScores, confusion, scores
from .trainer import TrainConfig, evaluate, gini_baseline, train
from .tree import DecisionTree, classify, feature_importance

__version__ = "0.1.0"
