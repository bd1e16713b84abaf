"""
RLDDU Action Encoding
Flat real action vector: compensation sets of every layer followed by the
stopping coefficients.

Order: layer, then z_a, z_c, o_e, o_f, o_g, then (user, sampled subcarrier),
then matrix entries. Hermitian z_* use m_r² reals (diagonal, then real and
imaginary part of each strictly-lower entry, row-major); o_* use 2·m_r² reals
(real and imaginary part of each entry, row-major).
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from rlddu.optim.du_core import COMPENSATION_FIELDS, HERMITIAN_FIELDS, CompensationSet


class ActionLayout(BaseModel):
    """Shape bookkeeping and encode/decode of action vectors."""
    model_config = ConfigDict(frozen=True)

    k_users: int = Field(..., ge=1)
    n_nodes: int = Field(..., ge=1)
    m_r: int = Field(..., ge=1)
    i_max: int = Field(..., ge=1)

    @property
    def per_pair(self) -> int:
        """Reals per (layer, user, node): 2 Hermitian + 3 complex matrices."""
        return 2 * self.m_r**2 + 3 * 2 * self.m_r**2

    @property
    def per_layer(self) -> int:
        return self.k_users * self.n_nodes * self.per_pair

    @property
    def length(self) -> int:
        return self.i_max * self.per_layer + self.i_max

    @property
    def beta_slice(self) -> slice:
        return slice(self.i_max * self.per_layer, self.length)

    def layer_slice(self, layer: int) -> slice:
        """Slice of layer (1-based) in the action vector."""
        if not 1 <= layer <= self.i_max:
            raise ValueError(f"layer {layer} outside [1, {self.i_max}]")
        start = (layer - 1) * self.per_layer
        return slice(start, start + self.per_layer)

    def scale_groups(self) -> np.ndarray:
        """Layer index (0-based) of every action entry, -1 for stopping coefficients."""
        groups = np.repeat(np.arange(self.i_max), self.per_layer)
        return np.concatenate([groups, np.full(self.i_max, -1)])

    def _field_size(self, name: str) -> int:
        return self.m_r**2 if name in HERMITIAN_FIELDS else 2 * self.m_r**2

    def encode(self, comps: list[CompensationSet], beta: np.ndarray) -> "ActionVector":
        if len(comps) != self.i_max:
            raise ValueError(f"need {self.i_max} compensation sets, got {len(comps)}")
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.i_max,):
            raise ValueError(f"beta must have {self.i_max} entries")

        parts = []
        for comp in comps:
            if comp.shape != (self.k_users, self.n_nodes, self.m_r, self.m_r):
                raise ValueError(f"compensation shape {comp.shape} does not fit the layout")
            for name in COMPENSATION_FIELDS:
                arr = getattr(comp, name)
                parts.append(_pack_hermitian(arr) if name in HERMITIAN_FIELDS else _pack_complex(arr))
        parts.append(beta)
        return ActionVector(values=np.concatenate(parts), layout=self)

    def decode(self, action: "ActionVector | np.ndarray") -> tuple[list[CompensationSet], np.ndarray]:
        values = action.values if isinstance(action, ActionVector) else np.asarray(action, dtype=float)
        if values.shape != (self.length,):
            raise ValueError(f"action length {values.shape} does not match layout length {self.length}")

        shape = (self.k_users, self.n_nodes)
        comps = []
        offset = 0
        for layer in range(1, self.i_max + 1):
            arrays = {}
            for name in COMPENSATION_FIELDS:
                size = self.k_users * self.n_nodes * self._field_size(name)
                chunk = values[offset:offset + size].reshape(*shape, -1)
                offset += size
                if name in HERMITIAN_FIELDS:
                    arrays[name] = _unpack_hermitian(chunk, self.m_r)
                else:
                    arrays[name] = _unpack_complex(chunk, self.m_r)
            comps.append(CompensationSet(**arrays, layer_index=layer))
        return comps, values[self.beta_slice].copy()

    def zero_action(self, depth: int | None = None) -> "ActionVector":
        """No compensation; stopping coefficients peaked at depth (default i_max)."""
        depth = self.i_max if depth is None else depth
        if not 1 <= depth <= self.i_max:
            raise ValueError(f"depth {depth} outside [1, {self.i_max}]")
        values = np.zeros(self.length)
        values[self.beta_slice.start + depth - 1] = 1.0
        return ActionVector(values=values, layout=self)


class ActionVector(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    layout: ActionLayout

    @model_validator(mode="after")
    def check_length(self) -> "ActionVector":
        if self.values.shape != (self.layout.length,):
            raise ValueError(f"action has shape {self.values.shape}, layout expects ({self.layout.length},)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("action has non-finite entries")
        return self

    @property
    def beta(self) -> np.ndarray:
        return self.values[self.layout.beta_slice]


def select_depth(beta: np.ndarray) -> int:
    """1-based argmax of the stopping coefficients, ties to the smallest index."""
    beta = np.asarray(beta, dtype=float)
    if beta.size == 0:
        raise ValueError("stopping coefficients are empty")
    return int(np.argmax(beta)) + 1


def _pack_hermitian(arr: np.ndarray) -> np.ndarray:
    m_r = arr.shape[-1]
    rows, cols = np.tril_indices(m_r, -1)
    diag = np.real(np.diagonal(arr, axis1=-2, axis2=-1))
    lower = arr[..., rows, cols]
    lower = np.stack([lower.real, lower.imag], axis=-1).reshape(*arr.shape[:-2], -1)
    return np.concatenate([diag, lower], axis=-1).ravel()


def _unpack_hermitian(chunk: np.ndarray, m_r: int) -> np.ndarray:
    rows, cols = np.tril_indices(m_r, -1)
    out = np.zeros((*chunk.shape[:-1], m_r, m_r), dtype=complex)
    idx = np.arange(m_r)
    out[..., idx, idx] = chunk[..., :m_r]
    lower = chunk[..., m_r:].reshape(*chunk.shape[:-1], -1, 2)
    values = lower[..., 0] + 1j * lower[..., 1]
    out[..., rows, cols] = values
    out[..., cols, rows] = values.conj()
    return out


def _pack_complex(arr: np.ndarray) -> np.ndarray:
    flat = arr.reshape(*arr.shape[:-2], -1)
    return np.stack([flat.real, flat.imag], axis=-1).ravel()


def _unpack_complex(chunk: np.ndarray, m_r: int) -> np.ndarray:
    pairs = chunk.reshape(*chunk.shape[:-1], m_r * m_r, 2)
    return (pairs[..., 0] + 1j * pairs[..., 1]).reshape(*chunk.shape[:-1], m_r, m_r)
