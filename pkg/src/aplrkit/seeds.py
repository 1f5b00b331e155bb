import hashlib


def derive_seed(root: int, stage: str) -> int:
    """Child seed for a named pipeline stage.

    ``sha256("<root>:<stage>")`` truncated to 32 bits, so standalone subcommands
    and full pipeline runs draw identical random streams for the same stage.
    """
    digest = hashlib.sha256(f"{int(root)}:{stage}".encode()).digest()
    return int.from_bytes(digest[:4], "little")
