"""Growth/epidemic particle systems, their limiting density maps on the
3-tree and on Z^d, and the numerics that certify chaos of the tree map."""

__version__ = "0.1.0"
