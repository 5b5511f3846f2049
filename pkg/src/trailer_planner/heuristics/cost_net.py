"""
Feed-forward network regressing the obstacle-free cost-to-go.

Training goes through scikit-learn's MLPRegressor; the fitted weights are copied
into a plain CostNet so inference is a numpy forward pass with no estimator state.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from sklearn.model_selection import train_test_split
from sklearn.neural_network import MLPRegressor
from sklearn.preprocessing import StandardScaler

from src.trailer_planner.errors import InvalidParamsError, LibraryFormatError, TrainingError
from src.trailer_planner.heuristics.dataset import CostDataset
from src.trailer_planner.utils.io_utils import check_format_version, load_json_data, save_results
from src.trailer_planner.vehicle.model import wrap_angle

logger = logging.getLogger('TrailerPlanner')

NET_FORMAT_VERSION = '1.0'
NET_FORMAT_MAJOR = 1
INPUT_DIM = 5


@dataclass(frozen=True)
class NetSpec:
    hidden_layers: Tuple[int, ...] = (64, 64)
    activation: str = 'tanh'
    batch_size: int = 128
    learning_rate: float = 1e-3
    max_epochs: int = 500
    patience: int = 25
    tol: float = 1e-8
    l2: float = 1e-6
    validation_split: float = 0.2
    mirror_augmentation: bool = False
    min_samples: int = 1000
    cap_factor: float = 3.0

    def validate(self) -> 'NetSpec':
        if not self.hidden_layers or min(self.hidden_layers) < 1:
            raise InvalidParamsError("hidden_layers must list positive widths")
        if self.activation not in ('tanh', 'logistic', 'relu'):
            raise InvalidParamsError(f"Unsupported activation {self.activation}")
        if not 0.0 < self.validation_split < 1.0:
            raise InvalidParamsError("validation_split must lie in (0, 1)")
        return self


_ACTIVATIONS = {
    'tanh': np.tanh,
    'logistic': lambda z: 1.0 / (1.0 + np.exp(-z)),
    'relu': lambda z: np.maximum(z, 0.0),
}


def goal_frame_features(states, goal) -> np.ndarray:
    """
    Express reduced states in the goal frame as (x, y, cos theta, sin theta, s)

    Args:
        states: (N, 4) or (4,) reduced states
        goal: Reduced goal state

    Returns:
        (N, 5) feature array
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    gx, gy, gth = float(goal[0]), float(goal[1]), float(goal[2])
    c, s = math.cos(gth), math.sin(gth)
    dx, dy = states[:, 0] - gx, states[:, 1] - gy
    rel_th = wrap_angle(states[:, 2] - gth)
    return np.column_stack([c * dx + s * dy, -s * dx + c * dy, np.cos(rel_th), np.sin(rel_th), states[:, 3]])


@dataclass
class CostNet:
    """Weights, normalization constants and training metadata of a trained network."""
    layer_sizes: List[int]
    activation: str
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    input_mean: np.ndarray
    input_scale: np.ndarray
    target_mean: float
    target_scale: float
    cap: float
    metadata: Dict = field(default_factory=dict)

    def predict_features(self, features: np.ndarray) -> np.ndarray:
        act = _ACTIVATIONS[self.activation]
        h = (np.atleast_2d(features) - self.input_mean) / self.input_scale
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = act(h @ w + b)
        out = (h @ self.weights[-1] + self.biases[-1])[:, 0]
        return np.maximum(out * self.target_scale + self.target_mean, 0.0)

    def predict(self, states, goal) -> np.ndarray:
        return self.predict_features(goal_frame_features(states, goal))

    def to_dict(self) -> Dict:
        return {
            'activation': self.activation,
            'biases': [b.tolist() for b in self.biases],
            'cap': self.cap,
            'format_version': NET_FORMAT_VERSION,
            'input_mean': self.input_mean.tolist(),
            'input_scale': self.input_scale.tolist(),
            'layer_sizes': list(self.layer_sizes),
            'metadata': self.metadata,
            'target_mean': self.target_mean,
            'target_scale': self.target_scale,
            'weights': [w.tolist() for w in self.weights],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'CostNet':
        try:
            net = cls(
                layer_sizes=[int(n) for n in data['layer_sizes']],
                activation=str(data['activation']),
                weights=[np.array(w, dtype=float) for w in data['weights']],
                biases=[np.array(b, dtype=float) for b in data['biases']],
                input_mean=np.array(data['input_mean'], dtype=float),
                input_scale=np.array(data['input_scale'], dtype=float),
                target_mean=float(data['target_mean']),
                target_scale=float(data['target_scale']),
                cap=float(data['cap']),
                metadata=data.get('metadata', {}),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise LibraryFormatError(f"Malformed network file: {e}") from e
        if net.layer_sizes[0] != INPUT_DIM or net.activation not in _ACTIVATIONS:
            raise LibraryFormatError("Network file has an unexpected input size or activation")
        return net


def mirror_rows(states: np.ndarray, costs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Append x-axis reflections (x, -y, -theta, -s) with unchanged costs."""
    mirrored = states.copy()
    mirrored[:, 1] = -mirrored[:, 1]
    mirrored[:, 2] = wrap_angle(-mirrored[:, 2])
    mirrored[:, 3] = -mirrored[:, 3]
    return np.vstack([states, mirrored]), np.concatenate([costs, costs])


def train(dataset: CostDataset, spec: Optional[NetSpec] = None, seed: int = 0) -> CostNet:
    """
    Fit the cost-to-go network

    Args:
        dataset: Cost-to-go samples relative to the goal (0, 0, 0, 0)
        spec: Architecture and optimizer settings
        seed: Seed for the split, initialization and batch order

    Returns:
        Trained CostNet with held-out RMSE in its metadata
    """
    spec = (spec or NetSpec()).validate()
    states, costs = dataset.states(), dataset.costs()
    if len(costs) < spec.min_samples:
        raise TrainingError(f"Dataset has {len(costs)} samples, at least {spec.min_samples} are required")
    if not np.all(np.isfinite(costs)) or not np.all(np.isfinite(states)):
        raise TrainingError("Dataset contains non-finite values")

    train_states, test_states, train_costs, test_costs = train_test_split(
        states, costs, test_size=spec.validation_split, random_state=seed)
    if spec.mirror_augmentation:
        train_states, train_costs = mirror_rows(train_states, train_costs)

    goal = (0.0, 0.0, 0.0, 0.0)
    x_train = goal_frame_features(train_states, goal)
    x_test = goal_frame_features(test_states, goal)
    scaler = StandardScaler().fit(x_train)
    input_scale = np.maximum(scaler.scale_, 1.0)
    target_mean = float(np.mean(train_costs))
    target_scale = float(max(np.std(train_costs), 1.0))

    model = MLPRegressor(
        hidden_layer_sizes=tuple(spec.hidden_layers),
        activation=spec.activation,
        solver='adam',
        alpha=spec.l2,
        batch_size=spec.batch_size,
        learning_rate_init=spec.learning_rate,
        max_iter=spec.max_epochs,
        early_stopping=True,
        n_iter_no_change=spec.patience,
        tol=spec.tol,
        random_state=seed,
        shuffle=True,
    )
    logger.info(f"Training cost-to-go network {spec.hidden_layers} on {len(train_costs)} samples")
    try:
        model.fit((x_train - scaler.mean_) / input_scale, (train_costs - target_mean) / target_scale)
    except ValueError as e:
        logger.error(f"Network training failed: {str(e)}")
        raise TrainingError(f"Network training failed: {e}") from e
    loss_curve = [float(v) for v in model.loss_curve_]
    if not np.all(np.isfinite(loss_curve)):
        logger.error(f"Training loss diverged after {len(loss_curve)} epochs (last={loss_curve[-1]})")
        raise TrainingError(f"Training diverged; loss curve ends with {loss_curve[-3:]}")

    layer_sizes = [INPUT_DIM] + list(spec.hidden_layers) + [1]
    net = CostNet(layer_sizes, spec.activation, [w.copy() for w in model.coefs_],
                  [b.copy() for b in model.intercepts_], scaler.mean_.copy(), input_scale,
                  target_mean, target_scale, cap=spec.cap_factor * float(np.max(costs)))
    residual = net.predict_features(x_test) - test_costs
    rmse = float(np.sqrt(np.mean(residual ** 2)))
    net.metadata = {
        'epochs': int(model.n_iter_),
        'loss_curve': loss_curve,
        'mean_cost': float(np.mean(costs)),
        'mirror_augmentation': spec.mirror_augmentation,
        'n_test': int(len(test_costs)),
        'n_train': int(len(train_costs)),
        'seed': seed,
        'spec': {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(spec).items()},
        'val_rmse': rmse,
    }
    if dataset.metadata.get('params_hash'):
        net.metadata['params_hash'] = dataset.metadata['params_hash']
    logger.info(f"Training finished after {model.n_iter_} epochs; held-out RMSE {rmse:.4f} "
                f"({rmse / max(np.mean(costs), 1e-12):.1%} of mean cost)")
    return net


def nn_cost(net: CostNet, state, goal) -> float:
    """
    Network cost-to-go of `state` towards `goal`, evaluated in the goal frame

    Args:
        net: Trained network
        state: Reduced state
        goal: Reduced goal state

    Returns:
        Non-negative cost estimate
    """
    return float(net.predict(state, goal)[0])


def nn_cost_batch(net: CostNet, states, goal) -> np.ndarray:
    return net.predict(states, goal)


def save_net(net: CostNet, file_path: str) -> None:
    save_results(net.to_dict(), file_path)


def load_net(file_path: str) -> CostNet:
    data = load_json_data(file_path)
    check_format_version(data, NET_FORMAT_MAJOR, 'Cost-to-go network')
    net = CostNet.from_dict(data)
    logger.info(f"Loaded cost-to-go network {net.layer_sizes} from {file_path}")
    return net
