"""Input validation helpers shared by the estimators and the functional API."""

import numbers
import warnings

import numpy as np


class ConfigError(ValueError):
    """Invalid configuration or usage (CLI exit code 2)."""


class NumericalError(ArithmeticError):
    """A numerical routine failed or produced non-finite output (CLI exit code 3)."""


class StochDMDWarning(UserWarning):
    pass


def check_trajectories(X, *, min_samples=1, min_times=1, name="X"):
    """Return ``X`` as a finite 2-D float array of shape (n_realizations, n_times)."""
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[np.newaxis, :]
    if X.ndim != 2:
        raise ConfigError(f"{name} must be 2-D (realizations x times), got ndim={X.ndim}")
    if np.iscomplexobj(X):
        raise ConfigError(f"{name} must be real-valued")
    X = X.astype(np.float64, copy=False)
    if not np.all(np.isfinite(X)):
        raise ConfigError(f"{name} contains NaN or inf")
    n, m = X.shape
    if n < min_samples:
        raise ConfigError(f"{name} needs at least {min_samples} realizations, got {n}")
    if m < min_times:
        raise ConfigError(f"{name} needs at least {min_times} time samples, got {m}")
    return X


def check_positive(value, name, *, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ConfigError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ConfigError(f"{name} must be > 0, got {value}")
    if not strict and value < 0:
        raise ConfigError(f"{name} must be >= 0, got {value}")
    return float(value)


def check_int(value, name, *, minimum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_is_fitted(estimator, attribute):
    from sklearn.exceptions import NotFittedError

    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"This {type(estimator).__name__} instance is not fitted yet; call 'fit' first."
        )


def warn(message):
    warnings.warn(message, StochDMDWarning, stacklevel=3)
