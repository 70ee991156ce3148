"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .network import MobilityNetwork


def check_frame(X, required: Sequence[str], name: str = "X", numeric: Iterable[str] = ()) -> pd.DataFrame:
    """Return ``X`` as a DataFrame holding ``required`` columns, numeric where asked."""
    if not isinstance(X, pd.DataFrame):
        try:
            X = pd.DataFrame(X)
        except (ValueError, TypeError) as exc:
            raise TypeError(f"{name} must be a DataFrame or convertible to one") from exc
    missing = [c for c in required if c not in X.columns]
    if missing:
        raise ValueError(f"{name} is missing columns {missing}")
    for c in numeric:
        if len(X) and not np.issubdtype(X[c].dtype, np.number):
            raise ValueError(f"{name}[{c!r}] must be numeric")
    return X


def check_pings(X) -> pd.DataFrame:
    if isinstance(X, pd.DataFrame) and "timestamp" in X.columns and "t" not in X.columns:
        X = X.rename(columns={"timestamp": "t"})
    X = check_frame(X, ["device_id", "t", "lat", "lon"], "pings", numeric=["t", "lat", "lon"])
    if len(X):
        if not X["lat"].between(-90, 90).all() or not X["lon"].between(-180, 180).all():
            raise ValueError("ping coordinates out of range")
        if (X["t"] < 0).any():
            raise ValueError("negative ping timestamp")
    return X


def check_networks(X) -> list[MobilityNetwork]:
    if isinstance(X, MobilityNetwork):
        return [X]
    nets = list(X)
    bad = [type(n).__name__ for n in nets if not isinstance(n, MobilityNetwork)]
    if bad:
        raise TypeError(f"expected MobilityNetwork items, got {sorted(set(bad))}")
    return nets
