import csv
import random

import numpy as np
import pytest

from abcdprgm.realdata import (
    IngestError,
    PeriodGraphs,
    build_groups,
    emit_scree,
    ingest_edge_list,
    parse_window,
    read_scree,
)
from abcdprgm.embedding import scree

HEADER = "date,player_a,player_b,mmr_a,mmr_b"

# Six players; period 0 is January, period 1 is March.  Player 6 plays only in
# period 0 and must be dropped; the February match lies in neither window.
FIXTURE = [
    "2023-01-02,1,2,1000,1100",
    "2023-01-03,1,3,1010,1200",
    "2023-01-04,2,3,1090,1190",
    "2023-01-05,2,1,1110,1020",   # duplicate pair (1, 2) in period 0
    "2023-01-06,4,5,1300,1400",
    "2023-01-07,5,6,1380,900",
    "2023-01-31,3,4,1210,1310",
    "2023-02-10,1,5,5000,5000",   # outside both windows
    "2023-03-01,1,4,1050,1280",
    "2023-03-02,2,5,1080,1420",
    "2023-03-03,3,5,1230,1440",
    "2023-03-04,4,2,1260,1070",
    "2023-03-31,3,1,1250,1060",
]
W0 = ("2023-01-01", "2023-01-31")
W1 = ("2023-03-01", "2023-03-31")


def write_rows(path, rows, header=HEADER):
    path.write_text("\n".join([header, *rows]) + "\n")
    return path


def adjacency(n, edges):
    Y = np.zeros((n, n), dtype=np.int8)
    for a, b in edges:
        Y[a - 1, b - 1] = Y[b - 1, a - 1] = 1
    return Y


@pytest.fixture
def fixture_path(tmp_path):
    return write_rows(tmp_path / "matches.csv", FIXTURE)


def test_fixture_gives_known_graphs(fixture_path):
    g = ingest_edge_list(fixture_path, W0, W1, min_games=1)
    assert g.node_ids == ["1", "2", "3", "4", "5"]
    assert np.array_equal(g.Y0, adjacency(5, [(1, 2), (1, 3), (2, 3), (4, 5), (3, 4)]))
    assert np.array_equal(g.Y1, adjacency(5, [(1, 4), (2, 5), (3, 5), (2, 4), (1, 3)]))
    assert np.allclose(g.rating0, [(1000 + 1010 + 1020) / 3, (1100 + 1090 + 1110) / 3,
                                   (1200 + 1190 + 1210) / 3, (1300 + 1310) / 2, (1400 + 1380) / 2])
    assert np.allclose(g.rating1, [(1050 + 1060) / 2, (1080 + 1070) / 2, (1230 + 1250) / 2,
                                   (1280 + 1260) / 2, (1420 + 1440) / 2])
    assert g.malformed == []


def test_min_games_filters_both_periods(fixture_path):
    # games per period: p0 {1:3, 2:3, 3:3, 4:2, 5:2, 6:1}, p1 {1:2, 2:2, 3:2, 4:2, 5:2}
    g = ingest_edge_list(fixture_path, W0, W1, min_games=2)
    assert g.node_ids == ["1", "2", "3", "4", "5"]
    with pytest.raises(IngestError):
        ingest_edge_list(fixture_path, W0, W1, min_games=3)


def test_row_order_invariance(fixture_path, tmp_path):
    ref = ingest_edge_list(fixture_path, W0, W1, min_games=1)
    for seed in range(5):
        rows = FIXTURE[:]
        random.Random(seed).shuffle(rows)
        g = ingest_edge_list(write_rows(tmp_path / f"s{seed}.csv", rows), W0, W1, min_games=1)
        assert g.node_ids == ref.node_ids
        assert np.array_equal(g.Y0, ref.Y0) and np.array_equal(g.Y1, ref.Y1)
        assert np.allclose(g.rating0, ref.rating0) and np.allclose(g.rating1, ref.rating1)


def test_duplicates_collapse(tmp_path):
    rows = ["2023-01-02,a,b,1,2"] * 5 + ["2023-01-03,b,a,1,2"] + ["2023-03-02,a,b,1,2"] * 3
    g = ingest_edge_list(write_rows(tmp_path / "d.csv", rows), W0, W1, min_games=1)
    assert np.array_equal(g.Y0, [[0, 1], [1, 0]]) and np.array_equal(g.Y1, [[0, 1], [1, 0]])


def test_malformed_rows_reported_with_line_numbers(tmp_path):
    rows = FIXTURE + ["not-a-date,1,2,1,1", "2023-01-09,1,1,5,5", "2023-01-10,1,,5,5",
                      "2023-01-11,1,2,abc,5"]
    g = ingest_edge_list(write_rows(tmp_path / "m.csv", rows), W0, W1, min_games=1)
    lines = [ln for ln, _ in g.malformed]
    first = len(FIXTURE) + 2  # header is line 1
    assert lines == [first, first + 1, first + 2, first + 3]
    with pytest.raises(IngestError):
        ingest_edge_list(tmp_path / "m.csv", W0, W1, min_games=1, max_malformed=2)


def test_missing_columns_and_bad_windows(tmp_path):
    with pytest.raises(IngestError):
        ingest_edge_list(write_rows(tmp_path / "h.csv", ["2023-01-02,1,2"], header="date,player_a,player_b"),
                         W0, W1)
    p = write_rows(tmp_path / "ok.csv", FIXTURE)
    with pytest.raises(ValueError):
        ingest_edge_list(p, ("2023-01-01", "2023-03-05"), W1, min_games=1)
    with pytest.raises(ValueError):
        ingest_edge_list(p, ("2023-02-01", "2023-01-01"), W1, min_games=1)


def test_extra_columns_ignored_and_missing_ratings(tmp_path):
    rows = ["2023-01-02,x,y,,7,foo", "2023-03-02,x,y,3,,bar"]
    g = ingest_edge_list(write_rows(tmp_path / "e.csv", rows, header=HEADER + ",extra"),
                         W0, W1, min_games=1)
    assert g.node_ids == ["x", "y"]
    assert np.isnan(g.rating0[0]) and g.rating0[1] == 7
    assert g.rating1[0] == 3 and np.isnan(g.rating1[1])


def test_parse_window():
    import datetime as dt

    assert parse_window("2023-02-17:2023-10-07") == (dt.date(2023, 2, 17), dt.date(2023, 10, 7))
    with pytest.raises(ValueError):
        parse_window("2023-02-17")


# -- groups -------------------------------------------------------------------

def graphs_with(r0, r1):
    n = len(r0)
    A = np.ones((n, n), dtype=np.int8) - np.eye(n, dtype=np.int8)
    return PeriodGraphs(node_ids=[str(i) for i in range(n)], Y0=A, Y1=A,
                        rating0=np.asarray(r0, float), rating1=np.asarray(r1, float))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_four_players_one_per_cell():
    # ratings (low, low, high, high); trends (down, up, down, up)
    g = graphs_with([100, 110, 300, 310], [90, 160, 290, 360])
    split = build_groups(g)
    assert split.mmr_group.tolist() == [0, 0, 1, 1]
    assert split.trend_group.tolist() == [0, 1, 0, 1]
    assert split.away.tolist() == [0, 3] and split.toward.tolist() == [1, 2]
    assert all(v == 1 for v in split.cell_sizes.values())
    away = split.away_graph(g)
    assert away.n == 2 and away.labels.tolist() == [0, 1]
    assert split.toward_graph(g).labels.tolist() == [0, 1]


def test_identical_ratings_are_all_low_and_flagged():
    g = graphs_with([5.0] * 6, [5.0] * 6)
    with pytest.warns(RuntimeWarning):
        split = build_groups(g)
    assert not split.mmr_group.any() and not split.trend_group.any()
    assert split.away.tolist() == list(range(6)) and split.toward.size == 0
    assert any("degenerate" in f for f in split.flags)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_median_ties_go_low():
    split = build_groups(graphs_with([1, 2, 2, 3], [1, 2, 2, 3]))
    assert split.mmr_group.tolist() == [0, 0, 0, 1]


def test_away_groups_balanced_with_unique_medians():
    rng = np.random.default_rng(0)
    r0 = rng.permutation(40).astype(float)
    r1 = r0 + rng.permutation(40)
    split = build_groups(graphs_with(r0, r1))
    n_away = split.away.size
    assert n_away % 2 == 0
    counts = np.bincount(split.mmr_group[split.away], minlength=2)
    assert counts[0] == counts[1] == n_away // 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_partitions_disjoint_and_cover():
    rng = np.random.default_rng(1)
    r0, r1 = rng.normal(size=31), rng.normal(size=31)
    r0[3] = np.nan
    split = build_groups(graphs_with(r0, r1))
    assert not set(split.away) & set(split.toward)
    rated = set(np.flatnonzero(np.isfinite(r0) & np.isfinite(r1)))
    assert set(split.away) | set(split.toward) == rated
    assert split.mmr_group[3] == -1 and split.flags


def test_small_cells_warn():
    with pytest.warns(RuntimeWarning):
        build_groups(graphs_with([1, 2, 3], [1, 2, 3]))


# -- scree ----------------------------------------------------------------------

def test_emit_scree_k3(tmp_path):
    K3 = np.ones((3, 3)) - np.eye(3)
    w = emit_scree(K3, 3, tmp_path / "s.csv")
    with open(tmp_path / "s.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["rank", "eigenvalue"]
    assert [(int(r), round(float(v), 12)) for r, v in rows[1:]] == [(1, 2.0), (2, -1.0), (3, -1.0)]
    assert np.array_equal(read_scree(tmp_path / "s.csv"), w)


def test_scree_round_trip_matches_embedding(tmp_path):
    rng = np.random.default_rng(2)
    U = np.triu(rng.random((40, 40)) < 0.2, 1).astype(float)
    A = U + U.T
    w = emit_scree(A, 10, tmp_path / "s.csv")
    assert np.array_equal(read_scree(tmp_path / "s.csv"), w)
    assert np.array_equal(w, scree(A, 10))
