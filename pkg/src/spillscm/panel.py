"""Panel data model, validation, and spatial weight construction.

Conventions used throughout the package:

* Unit 0 is the single treated unit; units 1..N are controls.
* ``t0`` counts pretreatment periods, so time columns ``[0, t0)`` are
  pretreatment and ``[t0, T)`` are post-treatment.
* ``w`` holds the treated-to-control weights and ``W`` the control-to-control
  weights; row i of the combined block ``(w | W)`` describes who control
  unit i listens to.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DataValidationError



@dataclass(frozen=True)
class PanelSchema:
    """Column mapping for long-format panel CSVs."""

    unit: str = "unit"
    time: str = "time"
    outcome: str = "outcome"
    treated: str = "treated"
    covariates: tuple[str, ...] = ()


@dataclass(frozen=True)
class PanelData:
    """Observed outcomes and covariates for one treated unit and N controls.

    outcomes : (N+1, T) array, row 0 is the treated unit; missing cells hold NaN.
    covariates : (N, T, k) array for the control units (k may be 0).
    t0 : number of pretreatment periods, 1 <= t0 < T.
    missing_mask : (N+1, T) boolean array, True where the outcome is missing.
    """

    outcomes: np.ndarray
    covariates: np.ndarray
    t0: int
    missing_mask: np.ndarray
    unit_labels: tuple[str, ...]
    time_labels: tuple[str, ...]

    def __post_init__(self):
        outcomes = np.asarray(self.outcomes, dtype=float)
        mask = np.asarray(self.missing_mask, dtype=bool)
        covariates = np.asarray(self.covariates, dtype=float)
        if outcomes.ndim != 2:
            raise DataValidationError("outcomes must be a 2-d (units x time) array")
        n_units, t_total = outcomes.shape
        if n_units < 2:
            raise DataValidationError("need at least one control unit")
        if covariates.ndim != 3 or covariates.shape[:2] != (n_units - 1, t_total):
            raise DataValidationError(
                "covariates must have shape (n_controls, t_total, k); got "
                f"{covariates.shape} for {n_units - 1} controls and {t_total} periods"
            )
        if mask.shape != outcomes.shape:
            raise DataValidationError("missing_mask shape must match outcomes")
        if not (1 <= self.t0 < t_total):
            raise DataValidationError(
                f"t0 must satisfy 1 <= t0 < T; got t0={self.t0} with T={t_total}"
            )
        if len(self.unit_labels) != n_units or len(self.time_labels) != t_total:
            raise DataValidationError("label lengths must match outcome dimensions")
        # The mask is authoritative; NaN cells and mask must agree.
        if not np.array_equal(np.isnan(outcomes), mask):
            raise DataValidationError("missing_mask must mark exactly the NaN outcome cells")
        if mask[0, : self.t0].any():
            raise DataValidationError(
                "treated-unit outcome missing in a pretreatment period; "
                "the pretreatment fit is not possible"
            )
        if mask[1:, : self.t0].any():
            raise DataValidationError("control outcomes must be complete in pretreatment periods")
        if covariates.size and np.isnan(covariates[:, : self.t0, :]).any():
            raise DataValidationError("covariates must be complete in pretreatment periods")
        for name, arr in (("outcomes", outcomes), ("covariates", covariates), ("missing_mask", mask)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "unit_labels", tuple(str(u) for u in self.unit_labels))
        object.__setattr__(self, "time_labels", tuple(str(t) for t in self.time_labels))

    @property
    def n_controls(self) -> int:
        return self.outcomes.shape[0] - 1

    @property
    def n_periods(self) -> int:
        return self.outcomes.shape[1]

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[2]

    @property
    def y0(self) -> np.ndarray:
        """Treated-unit outcome path, length T."""
        return self.outcomes[0]

    @property
    def yc(self) -> np.ndarray:
        """Control outcomes, (N, T)."""
        return self.outcomes[1:]

    def pretreatment_design(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (design, response) = (Yc pre as T0 x N, y0 pre as T0)."""
        return self.yc[:, : self.t0].T.copy(), self.y0[: self.t0].copy()


@dataclass(frozen=True)
class SpatialWeights:
    """Spatial weights: vector w (treated -> controls) and matrix W (controls)."""

    w: np.ndarray
    W: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        W = np.asarray(self.W, dtype=float)
        if w.ndim != 1 or W.shape != (w.size, w.size):
            raise DataValidationError(
                f"weight shapes inconsistent: w has length {w.size}, W has shape {W.shape}"
            )
        if np.diag(W).any():
            raise DataValidationError("diagonal of W must be zero (no self-weights)")
        w.setflags(write=False)
        W.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "W", W)

    @property
    def n_controls(self) -> int:
        return self.w.size

    def combined(self) -> np.ndarray:
        """The N x (1+N) block (w | W)."""
        return np.hstack([self.w[:, None], self.W])


def load_panel(csv_source, schema: PanelSchema, t0: int) -> PanelData:
    """Read a long-format CSV into a validated :class:`PanelData`.

    The CSV needs unit, time, outcome, and treated-flag columns; covariate
    columns are optional. Exactly one unit may carry a nonzero treated flag.
    Missing outcome cells (empty fields or absent rows) land in the missing
    mask and are never imputed.
    """
    frame = pd.read_csv(csv_source)
    for col in (schema.unit, schema.time, schema.outcome, schema.treated):
        if col not in frame.columns:
            raise DataValidationError(f"panel CSV is missing required column '{col}'")
    for col in schema.covariates:
        if col not in frame.columns:
            raise DataValidationError(f"panel CSV is missing covariate column '{col}'")

    dup = frame.duplicated(subset=[schema.unit, schema.time])
    if dup.any():
        pair = frame.loc[dup.idxmax(), [schema.unit, schema.time]].tolist()
        raise DataValidationError(f"duplicate (unit, time) row: {pair!r}")

    treated_flag = frame[schema.treated].fillna(0).astype(float)
    treated_units = frame.loc[treated_flag != 0.0, schema.unit].unique()
    if len(treated_units) != 1:
        raise DataValidationError(
            f"exactly one unit must be flagged treated; found {len(treated_units)}"
        )
    treated_unit = treated_units[0]

    # Controls keep their first-appearance order so external edge lists and
    # trade matrices indexed 0..N stay aligned with the panel.
    seen = frame[schema.unit].drop_duplicates().tolist()
    controls = [u for u in seen if u != treated_unit]
    unit_order = [treated_unit] + controls
    time_order = np.sort(frame[schema.time].unique())

    n_units = len(unit_order)
    t_total = len(time_order)
    if not (1 <= t0 < t_total):
        raise DataValidationError(f"t0 must satisfy 1 <= t0 < T; got t0={t0} with T={t_total}")

    unit_pos = {u: i for i, u in enumerate(unit_order)}
    time_pos = {t: j for j, t in enumerate(time_order)}

    outcomes = np.full((n_units, t_total), np.nan)
    covariates = np.full((n_units - 1, t_total, len(schema.covariates)), np.nan)
    rows = frame[schema.unit].map(unit_pos).to_numpy()
    cols = frame[schema.time].map(time_pos).to_numpy()
    outcomes[rows, cols] = frame[schema.outcome].to_numpy(dtype=float)
    for ci, cov in enumerate(schema.covariates):
        vals = frame[cov].to_numpy(dtype=float)
        control_rows = rows >= 1
        covariates[rows[control_rows] - 1, cols[control_rows], ci] = vals[control_rows]

    return PanelData(
        outcomes=outcomes,
        covariates=covariates,
        t0=t0,
        missing_mask=np.isnan(outcomes),
        unit_labels=tuple(str(u) for u in unit_order),
        time_labels=tuple(str(t) for t in time_order),
    )


def save_panel(panel: PanelData, path, schema: PanelSchema | None = None) -> None:
    """Write a panel back to long-format CSV; inverse of :func:`load_panel`."""
    schema = schema or PanelSchema(covariates=tuple(f"x{i+1}" for i in range(panel.n_covariates)))
    if len(schema.covariates) != panel.n_covariates:
        raise DataValidationError("schema covariate count must match the panel")
    records = []
    for ui, unit in enumerate(panel.unit_labels):
        for ti, time in enumerate(panel.time_labels):
            rec = {
                schema.unit: unit,
                schema.time: time,
                schema.outcome: panel.outcomes[ui, ti],
                schema.treated: 1 if ui == 0 else 0,
            }
            for ci, cov in enumerate(schema.covariates):
                rec[cov] = panel.covariates[ui - 1, ti, ci] if ui >= 1 else np.nan
            records.append(rec)
    pd.DataFrame.from_records(records).to_csv(path, index=False)


def build_adjacency_weights(edges, n_units: int) -> SpatialWeights:
    """Adjacency weights from an edge list over units 0..N (0 = treated).

    An edge (0, j) sets w_j = 1; an edge (i, j) between controls sets the
    symmetric pair W_ij = W_ji = 1.
    """
    w = np.zeros(n_units)
    W = np.zeros((n_units, n_units))
    for i, j in edges:
        i, j = int(i), int(j)
        if i == j:
            raise DataValidationError(f"self-loop edge ({i}, {j}) is not allowed")
        if not (0 <= i <= n_units and 0 <= j <= n_units):
            raise DataValidationError(f"edge ({i}, {j}) references a unit outside 0..{n_units}")
        if i > j:
            i, j = j, i
        if i == 0:
            w[j - 1] = 1.0
        else:
            W[i - 1, j - 1] = W[j - 1, i - 1] = 1.0
    return SpatialWeights(w=w, W=W, normalized=False)


def build_trade_weights(trade) -> SpatialWeights:
    """Row-share weights from an (N+1) x (N+1) flow matrix (index 0 = treated).

    Row i of the result divides control unit i's flows by their total, so the
    output block (w | W) is row-stochastic except for all-zero rows, which are
    kept at zero with a warning. Flows should be averaged over pre-intervention
    periods by the caller.
    """
    flows = np.asarray(trade, dtype=float)
    if flows.ndim != 2 or flows.shape[0] != flows.shape[1] or flows.shape[0] < 2:
        raise DataValidationError(f"trade matrix must be square (N+1 x N+1); got {flows.shape}")
    if (flows < 0).any():
        raise DataValidationError("trade flows must be nonnegative")
    n = flows.shape[0] - 1
    w = flows[1:, 0].copy()
    W = flows[1:, 1:].copy()
    np.fill_diagonal(W, 0.0)
    return row_normalize(SpatialWeights(w=w, W=W, normalized=False))


def row_normalize(weights: SpatialWeights) -> SpatialWeights:
    """Divide each nonzero row of (w | W) by its sum.

    Zero rows pass through unchanged with a warning; the operation is
    idempotent.
    """
    block = weights.combined()
    sums = block.sum(axis=1)
    zero_rows = np.flatnonzero(sums == 0.0)
    if zero_rows.size:
        warnings.warn(
            f"rows {zero_rows.tolist()} of (w|W) have zero total weight and stay zero",
            stacklevel=2,
        )
    safe = np.where(sums == 0.0, 1.0, sums)
    block = block / safe[:, None]
    return SpatialWeights(w=block[:, 0], W=block[:, 1:], normalized=True)


def load_edge_list(path) -> list[tuple[int, int]]:
    """Parse an edge-list text file with one 'i,j' pair per line."""
    edges = []
    if hasattr(path, "read"):
        data = path.read()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            data = fh.read()
    for lineno, line in enumerate(data.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise DataValidationError(f"edge file line {lineno}: expected 'i,j', got {line!r}")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise DataValidationError(f"edge file line {lineno}: non-integer unit index") from exc
    return edges


def load_trade_matrix(path, unit_labels) -> np.ndarray:
    """Read a labelled trade-flow CSV and align it to the panel's unit order."""
    frame = pd.read_csv(path, index_col=0)
    frame.index = frame.index.map(str)
    frame.columns = frame.columns.map(str)
    labels = [str(u) for u in unit_labels]
    missing = [u for u in labels if u not in frame.index or u not in frame.columns]
    if missing:
        raise DataValidationError(f"trade matrix is missing units {missing}")
    return frame.loc[labels, labels].to_numpy(dtype=float)
