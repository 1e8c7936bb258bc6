"""Ordered blocks of TT tensors sharing one shape."""

from .errors import ShapeMismatch
from .tt import TtTensor


class BlockVector:
    """An immutable, nonempty list of TT tensors with equal mode sizes.

    ``max_rank`` is the truncation policy carried along with the block;
    operations that round members use it unless told otherwise.
    """

    __slots__ = ("members", "max_rank")

    def __init__(self, members, max_rank=None):
        members = tuple(members)
        if not members:
            raise ValueError("a block vector needs at least one member")
        for m in members:
            if not isinstance(m, TtTensor):
                raise TypeError("members must be TtTensor instances")
            if m.mode_sizes != members[0].mode_sizes:
                raise ShapeMismatch("all members must share mode sizes")
        self.members = members
        self.max_rank = max_rank

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, key):
        if isinstance(key, slice):
            return BlockVector(self.members[key], self.max_rank)
        if isinstance(key, (list, tuple)):
            return BlockVector([self.members[i] for i in key], self.max_rank)
        return self.members[key]

    def __add__(self, other):
        """Concatenation, not elementwise addition."""
        if not isinstance(other, BlockVector):
            return NotImplemented
        return concat(self, other)

    def __repr__(self):
        return f"BlockVector(B={len(self)}, mode_sizes={self.mode_sizes}, max_rank={self.max_rank})"

    @property
    def mode_sizes(self):
        return self.members[0].mode_sizes

    @property
    def max_ranks(self):
        return tuple(max(r) for r in zip(*(m.ranks for m in self.members)))

    def with_rank(self, max_rank):
        return BlockVector(self.members, max_rank)


def concat(*blocks):
    members = [m for b in blocks for m in b.members]
    return BlockVector(members, blocks[0].max_rank)
