"""Loading, rescaling, and protocol-faithful splitting of ordinal observations.

Ratings files are delimited text (tab or comma, detected from the header) with
columns user/item/rating and an optional integer timestamp.  Surveys pair a
data file (one respondent per row) with a sidecar schema declaring each
ordinal column's level count, which is how heterogeneous level counts enter.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateRatingWarning,
    EmptyDatasetError,
    MissingTimestampsError,
    ParseError,
    SchemaMismatchError,
)


@dataclass
class ObservationSet:
    """Sparse matrix of ordinal levels with dense internal ids.

    ``instances``/``items``/``levels`` are aligned entry arrays; labels map
    internal ids back to the external identifiers seen in the files.
    """

    instances: np.ndarray
    items: np.ndarray
    levels: np.ndarray
    n_instances: int
    n_items: int
    item_levels: np.ndarray
    instance_labels: list = field(default_factory=list)
    item_labels: list = field(default_factory=list)
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        self.instances = np.asarray(self.instances, dtype=int)
        self.items = np.asarray(self.items, dtype=int)
        self.levels = np.asarray(self.levels, dtype=int)
        self.item_levels = np.asarray(self.item_levels, dtype=int)
        if self.timestamps is not None:
            self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        if not self.instance_labels:
            self.instance_labels = [str(d) for d in range(self.n_instances)]
        if not self.item_labels:
            self.item_labels = [str(i) for i in range(self.n_items)]
        if self.n_entries:
            pair_ids = self.instances * self.n_items + self.items
            if np.unique(pair_ids).size != pair_ids.size:
                raise ValueError("duplicate (instance, item) pairs")
            if np.any(self.levels < 1) or np.any(self.levels > self.item_levels[self.items]):
                raise ValueError("levels outside their items' ranges")

    @property
    def n_entries(self) -> int:
        return int(self.instances.size)

    def per_instance(self):
        """(items, levels) arrays grouped by instance, one entry per instance id."""
        out = [(np.empty(0, dtype=int), np.empty(0, dtype=int)) for _ in range(self.n_instances)]
        order = np.argsort(self.instances, kind="stable")
        ids = self.instances[order]
        starts = np.searchsorted(ids, np.arange(self.n_instances), side="left")
        ends = np.searchsorted(ids, np.arange(self.n_instances), side="right")
        for d in range(self.n_instances):
            sel = order[starts[d] : ends[d]]
            out[d] = (self.items[sel], self.levels[sel])
        return out

    def per_item(self):
        """(instances, levels) arrays grouped by item."""
        out = [(np.empty(0, dtype=int), np.empty(0, dtype=int)) for _ in range(self.n_items)]
        order = np.argsort(self.items, kind="stable")
        ids = self.items[order]
        starts = np.searchsorted(ids, np.arange(self.n_items), side="left")
        ends = np.searchsorted(ids, np.arange(self.n_items), side="right")
        for i in range(self.n_items):
            sel = order[starts[i] : ends[i]]
            out[i] = (self.instances[sel], self.levels[sel])
        return out

    def iter_entries(self):
        yield from zip(self.instances.tolist(), self.items.tolist(), self.levels.tolist())

    def fully_observed(self) -> bool:
        return self.n_entries == self.n_instances * self.n_items

    def subset(self, mask) -> "ObservationSet":
        """Entry-filtered copy sharing dimensions and label maps."""
        mask = np.asarray(mask)
        return ObservationSet(
            instances=self.instances[mask],
            items=self.items[mask],
            levels=self.levels[mask],
            n_instances=self.n_instances,
            n_items=self.n_items,
            item_levels=self.item_levels,
            instance_labels=self.instance_labels,
            item_labels=self.item_labels,
            timestamps=None if self.timestamps is None else self.timestamps[mask],
        )


def _detect_delimiter(header: str) -> str:
    return "\t" if "\t" in header else ","


def _header_columns(header: str, delim: str, path) -> dict:
    names = [c.strip().lower() for c in header.rstrip("\n").split(delim)]
    cols = {name: idx for idx, name in enumerate(names)}
    for required in ("user", "item", "rating"):
        if required not in cols:
            raise ParseError(f"{path}: header must name user/item/rating columns", line=1)
    return cols


def load_ratings(path, levels: int | None = None) -> ObservationSet:
    """Parse a ratings file; duplicates keep the entry with the latest timestamp.

    ``levels`` pins the scale 1..levels; when omitted the scale is inferred
    from the largest rating seen.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise EmptyDatasetError(f"{path} is empty")
        delim = _detect_delimiter(header)
        cols = _header_columns(header, delim, path)
        has_ts = "timestamp" in cols

        users: list[str] = []
        items: list[str] = []
        ratings: list[int] = []
        stamps: list[int] = []
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split(delim)
            if len(parts) <= max(cols.values()):
                raise ParseError(f"{path}: expected {len(cols)} fields", line=lineno)
            try:
                rating = int(parts[cols["rating"]])
            except ValueError:
                raise ParseError(
                    f"{path}: rating {parts[cols['rating']]!r} is not an integer", line=lineno
                ) from None
            if rating < 1 or (levels is not None and rating > levels):
                top = levels if levels is not None else "inf"
                raise ParseError(f"{path}: rating {rating} outside 1..{top}", line=lineno)
            users.append(parts[cols["user"]].strip())
            items.append(parts[cols["item"]].strip())
            ratings.append(rating)
            if has_ts:
                try:
                    stamps.append(int(parts[cols["timestamp"]]))
                except ValueError:
                    raise ParseError(f"{path}: timestamp is not an integer", line=lineno) from None

    if not ratings:
        raise EmptyDatasetError(f"{path} has no data rows")

    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    for u in users:
        user_index.setdefault(u, len(user_index))
    for it in items:
        item_index.setdefault(it, len(item_index))

    # keep-latest duplicate policy: latest timestamp, or last line without one
    chosen: dict[tuple[int, int], int] = {}
    duplicates = 0
    for pos in range(len(ratings)):
        key = (user_index[users[pos]], item_index[items[pos]])
        if key in chosen:
            duplicates += 1
            prev = chosen[key]
            if not has_ts or stamps[pos] >= stamps[prev]:
                chosen[key] = pos
        else:
            chosen[key] = pos
    if duplicates:
        warnings.warn(
            f"{path}: dropped {duplicates} duplicate (user, item) entries, kept latest",
            DuplicateRatingWarning,
            stacklevel=2,
        )

    keep = sorted(chosen.values())
    inst = np.array([user_index[users[p]] for p in keep], dtype=int)
    itm = np.array([item_index[items[p]] for p in keep], dtype=int)
    lvl = np.array([ratings[p] for p in keep], dtype=int)
    ts = np.array([stamps[p] for p in keep], dtype=np.int64) if has_ts else None
    scale = levels if levels is not None else int(lvl.max())
    return ObservationSet(
        instances=inst,
        items=itm,
        levels=lvl,
        n_instances=len(user_index),
        n_items=len(item_index),
        item_levels=np.full(len(item_index), scale),
        instance_labels=list(user_index),
        item_labels=list(item_index),
        timestamps=ts,
    )


def save_ratings(obs: ObservationSet, path) -> None:
    """Write a ratings file in the same format load_ratings reads."""
    has_ts = obs.timestamps is not None
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("user\titem\trating" + ("\ttimestamp\n" if has_ts else "\n"))
        for pos in range(obs.n_entries):
            row = (
                f"{obs.instance_labels[obs.instances[pos]]}\t"
                f"{obs.item_labels[obs.items[pos]]}\t{obs.levels[pos]}"
            )
            if has_ts:
                row += f"\t{obs.timestamps[pos]}"
            fh.write(row + "\n")


def rescale_levels(obs: ObservationSet, from_levels: int, to_levels: int) -> ObservationSet:
    """Map levels onto a new scale by ceiling(level * to / from); order-preserving."""
    if to_levels < 2:
        raise ValueError("target scale needs at least 2 levels")
    if np.any(obs.levels > from_levels):
        raise ValueError("levels exceed the declared source scale")
    mapped = (obs.levels * to_levels + from_levels - 1) // from_levels
    return ObservationSet(
        instances=obs.instances.copy(),
        items=obs.items.copy(),
        levels=mapped,
        n_instances=obs.n_instances,
        n_items=obs.n_items,
        item_levels=np.full(obs.n_items, to_levels),
        instance_labels=obs.instance_labels,
        item_labels=obs.item_labels,
        timestamps=None if obs.timestamps is None else obs.timestamps.copy(),
    )


def split_protocol(
    obs: ObservationSet,
    min_ratings: int = 30,
    n_valid: int = 5,
    n_test: int = 10,
    by_time: bool = False,
    rng: np.random.Generator | None = None,
):
    """Per-user split: drop sparse users, then carve validation and test tails.

    Users with fewer than ``min_ratings`` entries are removed entirely.  For
    each survivor the last ``n_test`` entries (by timestamp when ``by_time``,
    random order otherwise) go to test, the previous ``n_valid`` to
    validation, the rest to training.  Retained users are reindexed densely;
    item indexing is preserved.
    """
    if min_ratings < n_valid + n_test + 1:
        raise ValueError("min_ratings must exceed n_valid + n_test")
    if by_time and obs.timestamps is None:
        raise MissingTimestampsError("time-ordered split requested but no timestamps present")
    if rng is None:
        rng = np.random.default_rng()

    counts = np.bincount(obs.instances, minlength=obs.n_instances)
    survivors = np.flatnonzero(counts >= min_ratings)
    new_ids = np.full(obs.n_instances, -1, dtype=int)
    new_ids[survivors] = np.arange(survivors.size)

    assign = np.full(obs.n_entries, -1, dtype=int)  # 0 train, 1 valid, 2 test
    positions = np.arange(obs.n_entries)
    for d in survivors:
        sel = positions[obs.instances == d]
        if by_time:
            order = sel[np.argsort(obs.timestamps[sel], kind="stable")]
        else:
            order = sel[rng.permutation(sel.size)]
        n_train = sel.size - n_valid - n_test
        assign[order[:n_train]] = 0
        assign[order[n_train : n_train + n_valid]] = 1
        assign[order[n_train + n_valid :]] = 2

    def carve(which: int) -> ObservationSet:
        mask = assign == which
        return ObservationSet(
            instances=new_ids[obs.instances[mask]],
            items=obs.items[mask],
            levels=obs.levels[mask],
            n_instances=survivors.size,
            n_items=obs.n_items,
            item_levels=obs.item_levels,
            instance_labels=[obs.instance_labels[d] for d in survivors],
            item_labels=obs.item_labels,
            timestamps=None if obs.timestamps is None else obs.timestamps[mask],
        )

    return carve(0), carve(1), carve(2)


def load_schema(path) -> list[tuple[str, int]]:
    """Sidecar schema: one line per ordinal column, 'name<sep>levels'."""
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            sep = "\t" if "\t" in line else ","
            parts = [p.strip() for p in line.split(sep)]
            if len(parts) != 2:
                raise ParseError(f"{path}: expected 'column, levels'", line=lineno)
            try:
                levels = int(parts[1])
            except ValueError:
                raise ParseError(f"{path}: level count {parts[1]!r} not an integer", line=lineno) from None
            if levels < 2:
                raise ParseError(f"{path}: level count must be >= 2", line=lineno)
            entries.append((parts[0], levels))
    if not entries:
        raise ParseError(f"{path}: schema declares no columns", line=1)
    return entries


def load_survey(path, schema) -> ObservationSet:
    """Parse a survey table: one respondent per row, blank cells are missing.

    ``schema`` is a path or a pre-parsed [(column, levels)] list.  A column
    named 'id' (case-insensitive) supplies respondent labels.
    """
    if isinstance(schema, (str, bytes)) or hasattr(schema, "__fspath__"):
        schema = load_schema(schema)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise EmptyDatasetError(f"{path} is empty")
        delim = _detect_delimiter(header)
        names = [c.strip() for c in header.rstrip("\n").split(delim)]
        col_pos = {name.lower(): idx for idx, name in enumerate(names)}
        id_col = col_pos.get("id")
        item_cols = []
        for name, levels in schema:
            pos = col_pos.get(name.lower())
            if pos is None:
                raise SchemaMismatchError(f"{path}: schema column {name!r} missing from header")
            item_cols.append((name, levels, pos))

        inst, itm, lvl = [], [], []
        labels = []
        row_id = 0
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split(delim)
            labels.append(parts[id_col].strip() if id_col is not None else str(row_id))
            for item_idx, (name, levels, pos) in enumerate(item_cols):
                cell = parts[pos].strip() if pos < len(parts) else ""
                if not cell:
                    continue
                try:
                    value = int(cell)
                except ValueError:
                    raise ParseError(f"{path}: response {cell!r} not an integer", line=lineno) from None
                if not 1 <= value <= levels:
                    raise SchemaMismatchError(
                        f"{path} line {lineno}: value {value} outside 1..{levels} "
                        f"for column {name!r}"
                    )
                inst.append(row_id)
                itm.append(item_idx)
                lvl.append(value)
            row_id += 1

    if not inst:
        raise EmptyDatasetError(f"{path} has no responses")
    return ObservationSet(
        instances=np.array(inst, dtype=int),
        items=np.array(itm, dtype=int),
        levels=np.array(lvl, dtype=int),
        n_instances=row_id,
        n_items=len(item_cols),
        item_levels=np.array([levels for _, levels, _ in item_cols], dtype=int),
        instance_labels=labels,
        item_labels=[name for name, _, _ in item_cols],
    )


def holdout_cells(
    obs: ObservationSet, n_holdout: int, rng: np.random.Generator, min_context: int = 1
):
    """Randomly reserve up to n_holdout cells per instance (keeping min_context).

    Returns (context, held_out) observation sets over the same indexing; used
    for survey-style data where the per-user rating protocol does not apply.
    """
    held = np.zeros(obs.n_entries, dtype=bool)
    positions = np.arange(obs.n_entries)
    for d in range(obs.n_instances):
        sel = positions[obs.instances == d]
        take = min(n_holdout, max(0, sel.size - min_context))
        if take > 0:
            held[rng.choice(sel, size=take, replace=False)] = True
    return obs.subset(~held), obs.subset(held)
