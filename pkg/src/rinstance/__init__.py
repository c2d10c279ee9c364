"""Tweet relevance classification with instance-weighted logistic regression
and behavior-graph smoothing."""
from .data import (Dataset, PlantedSpec, Tweet, generate_planted,
                   load_dataset, save_dataset)
from .evaluate import MetricsReport, precision_recall_f1, t_test
from .graph import UserGraph, TweetGraph, laplacian, line_graph_convert
from .model import Hyper, ModelParams, predict_tweet
from .optimizer import BCDConfig, fit

__version__ = '0.1.0'

__all__ = ['Dataset', 'PlantedSpec', 'Tweet', 'generate_planted',
           'load_dataset', 'save_dataset', 'MetricsReport',
           'precision_recall_f1', 't_test', 'UserGraph', 'TweetGraph',
           'laplacian', 'line_graph_convert', 'Hyper', 'ModelParams',
           'predict_tweet', 'BCDConfig', 'fit']
