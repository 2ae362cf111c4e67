"""Two-level scene hierarchy: a meta classifier picks the group, a group classifier the label."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import ConfigurationError, ShapeError

DCASE_GROUPS = {
    "Vehicle": ("Bus", "Metro", "Tram"),
    "Indoor": ("Airport", "Metro Station", "Shopping Mall"),
    "Outdoor": ("Park", "Public Square", "Street Pedestrian", "Street Traffic"),
}


@dataclass(frozen=True)
class HierarchySpec:
    """``meta_groups`` maps a meta label to the fine labels it owns.

    ``labels`` is the flat fine-label order used for global class indices;
    by default it is the concatenation of the groups.
    """

    meta_groups: dict
    labels: tuple = ()

    def __post_init__(self):
        if not self.meta_groups:
            raise ConfigurationError("hierarchy needs at least one group")
        flat = [lab for group in self.meta_groups.values() for lab in group]
        for name, group in self.meta_groups.items():
            if len(group) == 0:
                raise ConfigurationError(f"meta group {name!r} is empty")
        if len(set(flat)) != len(flat):
            raise ConfigurationError("fine labels appear in more than one group")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(flat))
        elif sorted(map(str, self.labels)) != sorted(map(str, flat)):
            raise ConfigurationError("meta groups must partition the label set exactly")

    @property
    def groups(self) -> tuple:
        return tuple(self.meta_groups)

    def group_members(self, g: int) -> np.ndarray:
        """Global indices of the fine labels in group ``g``, in group order."""
        index = {lab: i for i, lab in enumerate(self.labels)}
        return np.array([index[lab] for lab in self.meta_groups[self.groups[g]]], dtype=np.int64)

    def meta_index(self) -> np.ndarray:
        """Group index of every global fine label."""
        out = np.empty(len(self.labels), dtype=np.int64)
        for g in range(len(self.groups)):
            out[self.group_members(g)] = g
        return out

    def fine_counts(self) -> tuple:
        return tuple(len(v) for v in self.meta_groups.values())


def hierarchical_predict(spec: HierarchySpec, meta_probs, fine_probs) -> np.ndarray:
    """Global fine label for every row.

    ``meta_probs`` is (n, G); ``fine_probs[g]`` is (n, |group g|). The fine
    label is always taken from the group the meta classifier selected.
    """
    meta_probs = np.atleast_2d(meta_probs)
    if meta_probs.shape[1] != len(spec.groups) or len(fine_probs) != len(spec.groups):
        raise ShapeError("probability arrays do not match the hierarchy's groups")
    meta = np.argmax(meta_probs, axis=1)
    out = np.empty(len(meta), dtype=np.int64)
    for g in range(len(spec.groups)):
        rows = meta == g
        if rows.any():
            local = np.argmax(np.atleast_2d(fine_probs[g])[rows], axis=1)
            out[rows] = spec.group_members(g)[local]
    return out
