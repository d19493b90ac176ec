"""MovieLens-1M ingestion: parsing, genre/frequency filtering, splitting.

The filter keeps movies matching a genre selection, then users who rated at
least ``min_ratings`` of the kept movies, then the surviving ratings, then
drops movies left without ratings, and reindexes everything densely. Gender
F maps to the protected flag.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .core import (
    Dataset,
    DegenerateSplitError,
    EmptyResultError,
    MalformedLineError,
    UnknownReferenceError,
    _frozen,
)
from .metrics import HELD_OUT, EvalSet

GENRE_VOCABULARY = (
    "Action", "Adventure", "Animation", "Children's", "Comedy", "Crime",
    "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror", "Musical",
    "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
)
SELECTED_GENRES = ("Action", "Crime", "Musical", "Romance", "Sci-Fi")
GENRE_MODES = ("any-genre", "only-genres")
DEFAULT_GENRE_MODE = "any-genre"


@dataclass(frozen=True)
class MovieLensRaw:
    """Parsed ML-1M files: user genders, movie genre sets, rating 4-tuples."""

    users: dict
    movies: dict
    user_ids: np.ndarray
    movie_ids: np.ndarray
    values: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        for name, dtype in (("user_ids", np.int64), ("movie_ids", np.int64),
                            ("values", np.float64), ("timestamps", np.int64)):
            arr = np.asarray(getattr(self, name), dtype=dtype)
            object.__setattr__(self, name, _frozen(arr))

    @property
    def num_ratings(self) -> int:
        return len(self.values)


def canonical_genres(names) -> tuple:
    """Map case-insensitive genre names onto the ML-1M vocabulary."""
    lookup = {g.lower(): g for g in GENRE_VOCABULARY}
    result = []
    for name in names:
        key = str(name).strip().lower()
        if key not in lookup:
            raise UnknownReferenceError(f"unknown genre {name!r}")
        result.append(lookup[key])
    return tuple(result)


def _read_lines(path):
    # titles may contain ISO-8859-1 characters; all structure is ASCII
    with open(path, "r", encoding="latin-1") as fh:
        return fh.read().splitlines()


def parse_ml1m(users_file, movies_file, ratings_file) -> MovieLensRaw:
    """Parse the three "::"-separated ML-1M files."""
    users = {}
    for no, line in enumerate(_read_lines(users_file), start=1):
        if not line.strip():
            continue
        parts = line.split("::")
        if len(parts) != 5 or parts[1] not in ("M", "F"):
            raise MalformedLineError(no, f"bad users line {line!r}")
        try:
            users[int(parts[0])] = parts[1]
        except ValueError as exc:
            raise MalformedLineError(no, str(exc)) from exc

    movies = {}
    for no, line in enumerate(_read_lines(movies_file), start=1):
        if not line.strip():
            continue
        parts = line.split("::")
        if len(parts) != 3:
            raise MalformedLineError(no, f"bad movies line {line!r}")
        try:
            movies[int(parts[0])] = frozenset(parts[2].split("|"))
        except ValueError as exc:
            raise MalformedLineError(no, str(exc)) from exc

    user_ids, movie_ids, values, stamps = [], [], [], []
    for no, line in enumerate(_read_lines(ratings_file), start=1):
        if not line.strip():
            continue
        parts = line.split("::")
        if len(parts) != 4:
            raise MalformedLineError(no, f"bad ratings line {line!r}")
        try:
            uid, mid, val, ts = int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3])
        except ValueError as exc:
            raise MalformedLineError(no, str(exc)) from exc
        if not 1 <= val <= 5:
            raise MalformedLineError(no, f"rating {val} outside [1, 5]")
        if uid not in users:
            raise UnknownReferenceError(f"rating references unknown user {uid}")
        if mid not in movies:
            raise UnknownReferenceError(f"rating references unknown movie {mid}")
        user_ids.append(uid)
        movie_ids.append(mid)
        values.append(val)
        stamps.append(ts)
    return MovieLensRaw(users, movies, user_ids, movie_ids, values, stamps)


def parse_ml1m_dir(directory) -> MovieLensRaw:
    """Parse users.dat, movies.dat, ratings.dat from one directory."""
    return parse_ml1m(os.path.join(directory, "users.dat"),
                      os.path.join(directory, "movies.dat"),
                      os.path.join(directory, "ratings.dat"))


def _genre_match(movie_genres: frozenset, selected: frozenset, mode: str) -> bool:
    if mode == "any-genre":
        return bool(movie_genres & selected)
    if mode == "only-genres":
        return bool(movie_genres) and movie_genres <= selected
    raise ValueError(f"genre mode must be one of {GENRE_MODES}, got {mode!r}")


def filter_dataset(raw: MovieLensRaw, genres=SELECTED_GENRES, min_ratings: int = 50,
                   mode: str = DEFAULT_GENRE_MODE) -> Dataset:
    """Apply the genre and rating-frequency filters and reindex densely.

    "any-genre" keeps movies listing at least one selected genre;
    "only-genres" keeps movies listing nothing but selected genres.
    """
    selected = frozenset(canonical_genres(genres))
    kept_movies = np.array(sorted(mid for mid, gs in raw.movies.items()
                                  if _genre_match(gs, selected, mode)), dtype=np.int64)
    on_kept = np.isin(raw.movie_ids, kept_movies)
    if min_ratings > 0:
        uids, counts = np.unique(raw.user_ids[on_kept], return_counts=True)
        user_order = uids[counts >= min_ratings]
    else:
        user_order = np.array(sorted(raw.users), dtype=np.int64)
    keep = on_kept & np.isin(raw.user_ids, user_order)
    if len(user_order) == 0 or not keep.any():
        raise EmptyResultError("no users or movies survive the filter")
    movie_order = np.unique(raw.movie_ids[keep])

    return Dataset(
        num_users=len(user_order),
        num_items=len(movie_order),
        user_idx=np.searchsorted(user_order, raw.user_ids[keep]),
        item_idx=np.searchsorted(movie_order, raw.movie_ids[keep]),
        values=raw.values[keep],
        protected=np.array([raw.users[int(uid)] == "F" for uid in user_order]),
        rating_scale=(1.0, 5.0),
    )


def split(d: Dataset, train_fraction: float, seed) -> tuple:
    """Random disjoint (train Dataset, test EvalSet) over the same index space."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    k = d.num_ratings
    n_train = int(round(train_fraction * k))
    if n_train == 0 or n_train == k:
        raise DegenerateSplitError(
            f"fraction {train_fraction} leaves one side of a {k}-rating split empty")
    perm = np.random.default_rng(seed).permutation(k)
    take = np.zeros(k, dtype=bool)
    take[perm[:n_train]] = True
    train = Dataset(d.num_users, d.num_items, d.user_idx[take], d.item_idx[take],
                    d.values[take], d.protected, d.rating_scale,
                    d.user_group_fine, d.item_group)
    test = EvalSet(d.user_idx[~take], d.item_idx[~take], d.values[~take], HELD_OUT)
    return train, test
