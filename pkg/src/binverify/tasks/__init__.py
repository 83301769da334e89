"""Task adapters: REC, Spatial-Map, Spatial-Grid, Spatial-Maze, Jigsaw (plus synthetic items)."""

from .base import KINDS, TaskAdapter, TaskContext, TaskInstance
from .jigsaw import JigsawAdapter, jigsaw_options
from .maze import (
    MazeAdapter,
    MazeModel,
    MazePath,
    PathCheck,
    bfs_path,
    expand_critical_points,
    extract_critical_points,
    generate_maze,
    maze_prompt,
    parse_maze_reply,
    validate_maze_path,
)
from .rec import RecAdapter, iou, rec_claim, score_rec
from .spatial import SpatialGridAdapter, SpatialMapAdapter, SyntheticAdapter, grid_claims, map_claims

ADAPTERS = {
    a.kind: a
    for a in (RecAdapter(), SpatialMapAdapter(), SpatialGridAdapter(), MazeAdapter(), JigsawAdapter(),
              SyntheticAdapter())
}

__all__ = [
    "ADAPTERS", "KINDS", "TaskAdapter", "TaskContext", "TaskInstance",
    "JigsawAdapter", "jigsaw_options",
    "MazeAdapter", "MazeModel", "MazePath", "PathCheck", "bfs_path", "expand_critical_points",
    "extract_critical_points", "generate_maze", "maze_prompt", "parse_maze_reply", "validate_maze_path",
    "RecAdapter", "iou", "rec_claim", "score_rec",
    "SpatialGridAdapter", "SpatialMapAdapter", "SyntheticAdapter", "grid_claims", "map_claims",
]
