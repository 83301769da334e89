"""Generate a maze, solve it, and watch the validator catch a corrupted path."""

from binverify.tasks.maze import (
    MazePath,
    bfs_path,
    extract_critical_points,
    generate_maze,
    validate_maze_path,
)

maze = generate_maze(9, 13, 5)
print(maze.dump())

path = bfs_path(maze)
points = extract_critical_points(path)
print(f"shortest path: {len(path)} cells, {len(points)} critical points")
print("valid:", bool(validate_maze_path(maze, path)))
print("valid from critical points:", bool(validate_maze_path(maze, MazePath(critical_points=points))))

# Shift one cell sideways; the validator reports the first step that breaks.
i = len(path) // 2
r, c = path[i]
broken = path[:i] + [(r + 1, c + 1)] + path[i + 1:]
check = validate_maze_path(maze, broken)
print(f"corrupted cell {i}: valid={bool(check)} step={check.step} reason={check.reason}")
