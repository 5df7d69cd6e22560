"""Match-list ingestion and group construction for two-period networks.

Input is a CSV with header ``date,player_a,player_b,mmr_a,mmr_b`` (ISO-8601
dates; extra columns ignored).  Each row is one match.  A period graph has
an edge between two players if they met at least once in that period.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .embedding import scree

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("date", "player_a", "player_b", "mmr_a", "mmr_b")


class IngestError(ValueError):
    pass


@dataclass
class PeriodGraphs:
    """Two graphs on a common node set, with per-period mean ratings."""

    node_ids: list
    Y0: np.ndarray
    Y1: np.ndarray
    rating0: np.ndarray
    rating1: np.ndarray
    labels: np.ndarray | None = None
    malformed: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.node_ids)

    def subgraph(self, index, labels=None) -> "PeriodGraphs":
        idx = np.asarray(index, dtype=int)
        sub = np.ix_(idx, idx)
        if labels is None and self.labels is not None:
            labels = self.labels[idx]
        return PeriodGraphs(
            node_ids=[self.node_ids[i] for i in idx],
            Y0=self.Y0[sub], Y1=self.Y1[sub],
            rating0=self.rating0[idx], rating1=self.rating1[idx],
            labels=None if labels is None else np.asarray(labels),
        )


def parse_window(text: str) -> tuple:
    """``"2023-02-17:2023-10-07"`` -> (date, date), both ends inclusive."""
    start, sep, end = text.partition(":")
    if not sep:
        raise ValueError(f"window must look like START:END, got {text!r}")
    return _parse_date(start), _parse_date(end)


def _parse_date(text) -> dt.date:
    if isinstance(text, dt.datetime):
        return text.date()
    if isinstance(text, dt.date):
        return text
    return dt.date.fromisoformat(str(text).strip()[:10])


def _node_key(node):
    # numeric ids sort numerically, everything else lexicographically after them
    try:
        return (0, int(node), "")
    except ValueError:
        return (1, 0, node)


def _rating(text):
    text = (text or "").strip()
    if not text:
        return math.nan
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("non-finite rating")
    return value


def ingest_edge_list(path, window_0, window_1, min_games: int = 50,
                     max_malformed: int = 100) -> PeriodGraphs:
    """Build the period-0 and period-1 graphs from a match list.

    Keeps the players with at least ``min_games`` matches in *each* period;
    repeated matches collapse to one edge.  Malformed rows are logged with
    their line numbers and skipped, up to ``max_malformed`` of them.
    """
    windows = [tuple(_parse_date(d) for d in w) for w in (window_0, window_1)]
    for lo, hi in windows:
        if lo > hi:
            raise ValueError(f"window start {lo} is after its end {hi}")
    (a0, b0), (a1, b1) = windows
    if not (b0 < a1 or b1 < a0):
        raise ValueError("windows must be disjoint")

    games = [Counter(), Counter()]
    rating_sum = [defaultdict(float), defaultdict(float)]
    rating_cnt = [Counter(), Counter()]
    edges = [set(), set()]
    malformed = []

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in REQUIRED_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise IngestError(f"missing column(s): {', '.join(missing)}")
        for row in reader:
            line = reader.line_num
            try:
                day = _parse_date(row["date"])
                a, b = (row["player_a"] or "").strip(), (row["player_b"] or "").strip()
                if not a or not b:
                    raise ValueError("empty player id")
                if a == b:
                    raise ValueError("player matched against themselves")
                ra, rb = _rating(row["mmr_a"]), _rating(row["mmr_b"])
            except (ValueError, TypeError, AttributeError) as exc:
                malformed.append((line, str(exc)))
                logger.warning("line %d skipped: %s", line, exc)
                if len(malformed) > max_malformed:
                    raise IngestError(f"more than {max_malformed} malformed rows") from exc
                continue
            for s, (lo, hi) in enumerate(windows):
                if lo <= day <= hi:
                    games[s][a] += 1
                    games[s][b] += 1
                    for who, r in ((a, ra), (b, rb)):
                        if not math.isnan(r):
                            rating_sum[s][who] += r
                            rating_cnt[s][who] += 1
                    edges[s].add((a, b) if a < b else (b, a))

    keep = sorted(
        (v for v in games[0] if games[0][v] >= min_games and games[1][v] >= min_games),
        key=_node_key,
    )
    if not keep:
        raise IngestError(f"no player has {min_games} or more matches in both periods")
    index = {v: i for i, v in enumerate(keep)}
    n = len(keep)
    Ys = []
    for s in range(2):
        Y = np.zeros((n, n), dtype=np.int8)
        for a, b in edges[s]:
            if a in index and b in index:
                Y[index[a], index[b]] = Y[index[b], index[a]] = 1
        Ys.append(Y)
    ratings = [
        np.array([rating_sum[s][v] / rating_cnt[s][v] if rating_cnt[s][v] else math.nan for v in keep])
        for s in range(2)
    ]
    return PeriodGraphs(node_ids=keep, Y0=Ys[0], Y1=Ys[1], rating0=ratings[0],
                        rating1=ratings[1], malformed=malformed)


@dataclass
class GroupSplit:
    """Median splits on rating level and rating trend.

    ``cell[i]`` is ``2 * mmr_group + trend_group`` (-1 if the player lacks a
    rating).  The away graph holds cells (0,0) and (1,1), the toward graph
    (0,1) and (1,0).  Within either subgraph a node's label is its
    MMR group.
    """

    mmr_group: np.ndarray
    trend_group: np.ndarray
    away: np.ndarray
    toward: np.ndarray
    cell_sizes: dict
    flags: list

    def away_graph(self, graphs: PeriodGraphs) -> PeriodGraphs:
        return graphs.subgraph(self.away, self.mmr_group[self.away])

    def toward_graph(self, graphs: PeriodGraphs) -> PeriodGraphs:
        return graphs.subgraph(self.toward, self.mmr_group[self.toward])


def build_groups(graphs: PeriodGraphs) -> GroupSplit:
    """MMR-group and trend-group by median split; values equal to the median go low."""
    r0, r1 = np.asarray(graphs.rating0, float), np.asarray(graphs.rating1, float)
    rated = np.isfinite(r0) & np.isfinite(r1)
    flags = []
    if not rated.all():
        flags.append(f"{int((~rated).sum())} player(s) without ratings left ungrouped")
    if not rated.any():
        raise ValueError("no player has ratings in both periods")
    trend = r1 - r0
    mmr = np.zeros(len(r0), dtype=int)
    trd = np.zeros(len(r0), dtype=int)
    mmr[rated] = r0[rated] > np.median(r0[rated])
    trd[rated] = trend[rated] > np.median(trend[rated])
    mmr[~rated] = trd[~rated] = -1

    sizes = {(i, j): int(np.sum(rated & (mmr == i) & (trd == j))) for i in (0, 1) for j in (0, 1)}
    if not (mmr == 1).any():
        flags.append("all rated players fall in MMR group 0 (degenerate median)")
    if not (trd == 1).any():
        flags.append("all rated players fall in trend group 0 (degenerate median)")
    small = [c for c, k in sizes.items() if k < 2]
    if small:
        msg = f"fewer than 2 players in cell(s) {small}"
        flags.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    away = np.flatnonzero(rated & (mmr == trd))
    toward = np.flatnonzero(rated & (mmr != trd))
    return GroupSplit(mmr_group=mmr, trend_group=trd, away=away, toward=toward,
                      cell_sizes=sizes, flags=flags)


def emit_scree(graph, k: int, path) -> np.ndarray:
    """Write ``rank,eigenvalue`` rows (magnitude-sorted) to ``path``."""
    w = scree(graph, k)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(("rank", "eigenvalue"))
        for r, v in enumerate(w, start=1):
            out.writerow((r, format(float(v), ".17g")))
    return w


def read_scree(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    ranks = [int(r["rank"]) for r in rows]
    if ranks != list(range(1, len(rows) + 1)):
        raise ValueError("ranks must run 1..k")
    return np.array([float(r["eigenvalue"]) for r in rows])
