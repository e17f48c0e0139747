from .exceptions import RoleLayoutError

REFERENCE = "reference"
ADJACENT = "adjacent"
CURRENT = "current"

_ROLE_RANK = {REFERENCE: 0, ADJACENT: 1, CURRENT: 2}


def clip_roles(num_frames: int, num_references: int):
    """Role layout reference*, adjacent*, current for a clip of ``num_frames``."""
    if num_frames < 1:
        raise RoleLayoutError("a clip needs at least one frame")
    refs = max(0, min(num_references, num_frames - 1))
    adjacent = num_frames - refs - 1
    return tuple([REFERENCE] * refs + [ADJACENT] * adjacent + [CURRENT])


def validate_roles(roles):
    roles = tuple(roles)
    if not roles:
        raise RoleLayoutError("empty role sequence")
    unknown = [r for r in roles if r not in _ROLE_RANK]
    if unknown:
        raise RoleLayoutError(f"unknown roles: {unknown}")
    if roles[-1] != CURRENT or roles.count(CURRENT) != 1:
        raise RoleLayoutError("exactly one current frame is required, and it must be last")
    ranks = [_ROLE_RANK[r] for r in roles]
    if any(a > b for a, b in zip(ranks, ranks[1:])):
        raise RoleLayoutError(f"roles must follow reference*, adjacent*, current: {roles}")
    return roles
