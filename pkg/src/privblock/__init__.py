"""Two-party private transformer-block inference toolkit.

Building blocks: fixed-point encodings over ring/field domains, a SIMD
lattice HE core with no rotation anywhere in its API, additive/boolean
sharing with an ideal-functionality gadget provider, a cost-accounting
channel with simulated network profiles, the four two-party protocols
(matrix multiplication, softmax, layernorm, gelu), an inflection-point
piecewise approximation engine, and a transformer-block orchestrator.
"""

__version__ = "0.1.0"
