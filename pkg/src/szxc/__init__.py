"""szxc: a compiler from a linear dependently typed lambda calculus into
families of SZX diagrams, with instantiation, simplification and a
density-matrix verification oracle."""

__version__ = "0.1.0"
