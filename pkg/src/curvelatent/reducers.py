"""Reducer contract, PCA and kernel PCA with a learned pre-image map.

Every reducer works on standardized (P4) rows: ``fit`` learns the latent
space, ``transform`` projects rows into it and ``inverse_transform`` maps
latent codes back to P4 rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import linalg

from .curves import CurveKind, CurveMatrix
from .errors import EmptyModel, NonPositiveSpectrum, RankDeficient

MODEL_FORMAT = "curvelatent-model"
MODEL_VERSION = 1

_REGISTRY: dict[str, type] = {}


@dataclass(frozen=True, eq=False)
class LatentMatrix:
    data: np.ndarray
    row_meta: tuple
    kind: CurveKind

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2 or data.shape[0] != len(self.row_meta):
            raise ValueError("latent matrix must be K x d with one timestamp per row")
        if not np.all(np.isfinite(data)):
            raise ValueError("latent codes must be finite")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "row_meta", tuple(self.row_meta))

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def _sign_fix(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


class Reducer:
    """Base class: array-level ``fit``/``transform``/``inverse_transform``
    plus :class:`CurveMatrix` wrappers and text serialization."""

    name = "reducer"

    def __init__(self, n_components: int = 2):
        if n_components < 1:
            raise ValueError("n_components must be at least 1")
        self.n_components = int(n_components)
        self.fitted = False

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        _REGISTRY[cls.name] = cls

    def _check_fitted(self):
        if not self.fitted:
            raise EmptyModel(f"{self.name} used before fit")

    def fit(self, X, val=None) -> "Reducer":
        raise NotImplementedError

    def transform(self, X) -> np.ndarray:
        raise NotImplementedError

    def inverse_transform(self, Z) -> np.ndarray:
        raise NotImplementedError

    def fit_matrix(self, train: CurveMatrix, val: Optional[CurveMatrix] = None) -> "Reducer":
        _require_p4(train)
        return self.fit(train.data, None if val is None else val.data)

    def encode(self, m: CurveMatrix) -> LatentMatrix:
        _require_p4(m)
        return LatentMatrix(self.transform(m.data), m.row_meta, m.kind)

    def decode(self, latent: LatentMatrix, like: CurveMatrix) -> CurveMatrix:
        """Inverse-map ``latent`` onto the grid and standardization of ``like``."""
        _require_p4(like)
        out = self.inverse_transform(latent.data)
        return CurveMatrix(out, like.grid, latent.kind, latent.row_meta, "P4",
                           like.standardization)

    def reconstruct(self, m: CurveMatrix) -> CurveMatrix:
        return self.decode(self.encode(m), m)

    # serialization: subclasses list their hyperparameters and fitted arrays
    def get_params(self) -> dict:
        return {"n_components": self.n_components}

    def _state(self) -> dict:
        return {}

    def _set_state(self, state: dict) -> None:
        for key, value in state.items():
            setattr(self, key, value)

    def to_dict(self) -> dict:
        self._check_fitted()
        arrays = {}
        for key, value in self._state().items():
            value = np.asarray(value, dtype=float)
            arrays[key] = {"shape": list(value.shape), "values": value.ravel().tolist()}
        return {"format": MODEL_FORMAT, "version": MODEL_VERSION, "type": self.name,
                "params": self.get_params(), "arrays": arrays}

    @classmethod
    def from_dict(cls, payload: dict) -> "Reducer":
        if payload.get("format") != MODEL_FORMAT or payload.get("version") != MODEL_VERSION:
            raise ValueError("not a supported model file")
        klass = _REGISTRY[payload["type"]]
        model = klass(**payload["params"])
        state = {
            key: np.array(entry["values"], dtype=float).reshape(entry["shape"])
            for key, entry in payload["arrays"].items()
        }
        model._set_state(state)
        model.fitted = True
        return model


def _require_p4(m: CurveMatrix):
    if m.stage != "P4":
        raise ValueError("reducers operate on standardized (P4) matrices")


def save_model(model: Reducer, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1) + "\n", encoding="utf-8")


def load_model(path) -> Reducer:
    return Reducer.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class PCA(Reducer):
    """PCA through the SVD of the centered training matrix."""

    name = "pca"

    def fit(self, X, val=None) -> "PCA":
        X = np.asarray(X, dtype=float)
        k, n = X.shape
        d = self.n_components
        if d > min(k, n):
            raise RankDeficient(f"d={d} exceeds min(K, N)={min(k, n)}")
        self.mean_ = X.mean(axis=0)
        _, s, vt = linalg.svd(X - self.mean_, full_matrices=False)
        tol = s[0] * max(k, n) * np.finfo(float).eps if s.size else 0.0
        rank = int(np.sum(s > tol))
        if d > rank:
            raise RankDeficient(f"d={d} exceeds the rank {rank} of the centered data")
        self.components_ = np.ascontiguousarray(_sign_fix(vt[:d].T).T)
        self.singular_values_ = s[:d]
        self.fitted = True
        return self

    @property
    def explained_variance_(self) -> np.ndarray:
        return self.singular_values_ ** 2

    def transform(self, X) -> np.ndarray:
        self._check_fitted()
        return (np.asarray(X, dtype=float) - self.mean_) @ self.components_.T

    def inverse_transform(self, Z) -> np.ndarray:
        self._check_fitted()
        return np.asarray(Z, dtype=float) @ self.components_ + self.mean_

    def _state(self) -> dict:
        return {"mean_": self.mean_, "components_": self.components_,
                "singular_values_": self.singular_values_}


KERNELS = ("polynomial", "rbf", "sigmoid", "cosine")


def kernel_matrix(X, Y, kernel: str, gamma: float = 1.0, degree: int = 3,
                  coef0: float = 1.0) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if kernel == "polynomial":
        return (gamma * X @ Y.T + coef0) ** degree
    if kernel == "rbf":
        sq = (X ** 2).sum(1)[:, None] + (Y ** 2).sum(1)[None, :] - 2 * X @ Y.T
        return np.exp(-gamma * np.maximum(sq, 0.0))
    if kernel == "sigmoid":
        return np.tanh(gamma * X @ Y.T + coef0)
    if kernel == "cosine":
        xn = np.linalg.norm(X, axis=1)
        yn = np.linalg.norm(Y, axis=1)
        xn[xn == 0] = 1.0
        yn[yn == 0] = 1.0
        return (X / xn[:, None]) @ (Y / yn[:, None]).T
    raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")


def center_kernel(K: np.ndarray) -> np.ndarray:
    """Double-center a square kernel matrix."""
    row = K.mean(axis=0)
    return K - row[None, :] - K.mean(axis=1)[:, None] + row.mean()


class KernelPCA(Reducer):
    """Kernel PCA; the way back is kernel ridge regression from latent codes
    to training rows, using the same kernel evaluated in latent space."""

    name = "kpca"

    def __init__(self, n_components: int = 2, kernel: str = "rbf",
                 gamma: Optional[float] = None, degree: int = 3, coef0: float = 1.0,
                 alpha: float = 1e-3):
        super().__init__(n_components)
        if kernel not in KERNELS:
            raise ValueError(f"unknown kernel {kernel!r}")
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.kernel = kernel
        self.gamma = gamma
        self.degree = int(degree)
        self.coef0 = float(coef0)
        self.alpha = float(alpha)

    def get_params(self) -> dict:
        return {"n_components": self.n_components, "kernel": self.kernel,
                "gamma": self.gamma, "degree": self.degree, "coef0": self.coef0,
                "alpha": self.alpha}

    def _k(self, X, Y):
        return kernel_matrix(X, Y, self.kernel, self.gamma_, self.degree, self.coef0)

    def fit(self, X, val=None) -> "KernelPCA":
        X = np.asarray(X, dtype=float)
        d = self.n_components
        self.gamma_ = float(self.gamma) if self.gamma is not None else 1.0 / X.shape[1]
        self.X_fit_ = X
        K = self._k(X, X)
        self.K_fit_rows_ = K.mean(axis=0)
        self.K_fit_all_ = np.array(self.K_fit_rows_.mean())
        Kc = center_kernel(K)
        Kc = (Kc + Kc.T) / 2
        evals, evecs = linalg.eigh(Kc)
        # contiguous copies keep results bit-identical after a save/load round trip
        evals = np.ascontiguousarray(evals[::-1][:d])
        evecs = np.ascontiguousarray(evecs[:, ::-1][:, :d])
        tol = max(1.0, abs(evals[0])) * X.shape[0] * np.finfo(float).eps
        if evals.size < d or np.any(evals <= tol):
            raise NonPositiveSpectrum(
                f"{self.kernel} kernel has fewer than {d} positive eigenvalues")
        self.eigenvalues_ = evals
        self.eigenvectors_ = _sign_fix(evecs)
        self.fitted = True
        Z = self.eigenvectors_ * np.sqrt(evals)
        self.Z_fit_ = Z
        Kz = self._k(Z, Z)
        Kz[np.diag_indices_from(Kz)] += self.alpha
        self.dual_coef_ = np.ascontiguousarray(linalg.solve(Kz, X))
        return self

    def transform(self, X) -> np.ndarray:
        self._check_fitted()
        k = self._k(X, self.X_fit_)
        kc = k - self.K_fit_rows_[None, :] - k.mean(axis=1)[:, None] + self.K_fit_all_
        return kc @ (self.eigenvectors_ / np.sqrt(self.eigenvalues_))

    def inverse_transform(self, Z) -> np.ndarray:
        self._check_fitted()
        return self._k(Z, self.Z_fit_) @ self.dual_coef_

    def _state(self) -> dict:
        return {"X_fit_": self.X_fit_, "K_fit_rows_": self.K_fit_rows_,
                "K_fit_all_": self.K_fit_all_, "eigenvalues_": self.eigenvalues_,
                "eigenvectors_": self.eigenvectors_, "Z_fit_": self.Z_fit_,
                "dual_coef_": self.dual_coef_, "gamma_": self.gamma_}

    def _set_state(self, state: dict) -> None:
        super()._set_state(state)
        self.gamma_ = float(state["gamma_"])
        self.K_fit_all_ = float(state["K_fit_all_"])
