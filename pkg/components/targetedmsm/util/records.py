import csv
import os.path
import typing as T


def write_rows(path: str, fieldnames: T.Sequence[str], rows: T.Iterable[dict]) -> int:
    """writes tabular output (draws, simulation tables) as a headed CSV

    @param path destination, parent directories are created
    @return number of rows written
    """
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)

    count = 0
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
            count += 1

    return count


def append_rows(path: str, fieldnames: T.Sequence[str], rows: T.Iterable[dict]) -> int:
    """appends rows, writing the header only when the file is new or empty"""
    fresh = not os.path.exists(path) or os.path.getsize(path) == 0

    count = 0
    with open(path, "a", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames))
        if fresh:
            writer.writeheader()
        for row in rows:
            writer.writerow(row)
            count += 1

    return count
