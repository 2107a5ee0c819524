"""Class names and stream tags shared across the pipeline."""

CLASSES = ("normal", "glaucoma")
NORMAL, GLAUCOMA = 0, 1

RAW_STREAMS = ("R", "G", "B")
LBP_STREAMS = ("LBP-R", "LBP-G", "LBP-B")
FUSED = "fused"


def class_index(name: str) -> int:
    """Index of a class token, case-insensitive."""
    token = name.strip().lower()
    if token not in CLASSES:
        raise ValueError(f"unknown label {name!r}; expected one of {', '.join(CLASSES)}")
    return CLASSES.index(token)
