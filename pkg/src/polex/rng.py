"""Counter-based random substreams for reproducible parallel Monte Carlo.

Every source of randomness in the package is a Philox substream addressed by
``(master_seed, tag, sub, block)``.  Philox is a counter-based generator, so
distinct addresses yield statistically independent, non-overlapping streams
and a draw is a pure function of its address -- no global state, no ordering
constraints between paths, and identical output regardless of how work is
scheduled.

Addressing scheme
-----------------
* ``tag`` separates consumers (Brownian increments, action-sampling noise,
  bootstrap resampling, ...).  Tags are module constants below.
* ``sub`` selects the second 64-bit Philox key word; used for path indices.
* ``block`` offsets the third counter word; used for grid sizes or outer-loop
  indices.  A stream would need 2**128 draws to collide with a neighbouring
  block, so blocks are disjoint for any realistic draw count.
"""

from __future__ import annotations

import numpy as np

# Consumer tags.  Never renumber: stream identities are part of the
# reproducibility contract.
BROWNIAN = 1
SAMPLING = 2
SAMPLING_SHARED = 3
QUADRATURE = 4
BOOTSTRAP = 5
RUN_SEED = 6
REFERENCE = 7
CONDITIONAL = 8

_MASK64 = (1 << 64) - 1


def _mix_key(master_seed: int, tag: int) -> int:
    """Collapse (master_seed, tag) into the first 64-bit Philox key word."""
    ss = np.random.SeedSequence(entropy=int(master_seed) & _MASK64, spawn_key=(int(tag),))
    return int(ss.generate_state(1, np.uint64)[0])


def substream(master_seed: int, tag: int, sub: int = 0, block: int = 0) -> np.random.Generator:
    """Return an independent generator addressed by (master_seed, tag, sub, block)."""
    key = np.array([_mix_key(master_seed, tag), int(sub)], dtype=np.uint64)
    counter = np.array([0, 0, int(block), 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


class SubstreamFactory:
    """Cheap repeated access to substreams sharing one (master_seed, tag).

    Reuses a single Philox bit generator and resets its state per request,
    which is several times faster than fresh construction in per-path loops.
    Output is bit-identical to ``substream(master_seed, tag, sub, block)``.
    """

    def __init__(self, master_seed: int, tag: int):
        self.master_seed = int(master_seed)
        self.tag = int(tag)
        key = np.array([_mix_key(master_seed, tag), 0], dtype=np.uint64)
        self._bitgen = np.random.Philox(key=key)
        self._gen = np.random.Generator(self._bitgen)
        self._state = self._bitgen.state

    def generator(self, sub: int = 0, block: int = 0) -> np.random.Generator:
        st = self._state
        st["state"]["key"][1] = sub
        st["state"]["counter"][:] = 0
        st["state"]["counter"][2] = block
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bitgen.state = st
        return self._gen


def derive_seed(master_seed: int, index: int) -> int:
    """Derive a 64-bit child seed (e.g. one per outer run) from a master seed."""
    return int(substream(master_seed, RUN_SEED, sub=index).integers(0, 1 << 63, dtype=np.uint64))
