"""Stable derivation of named sub-seeds from one master seed.

Every run is driven by a single integer seed; each consumer (fourier
frequencies, weight permutation, proposal stream, gumbel noise, training
noise) gets its own 64-bit seed derived by hashing the master seed with the
consumer's label. SHA-256 keeps the mapping platform- and version-stable,
which the decoder relies on.
"""

import hashlib


def derive_seed(master_seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{label}:{master_seed}".encode("ascii")).digest()
    return int.from_bytes(digest[:8], "little")


class SeedTree:
    """Named sub-seeds for one run."""

    def __init__(self, master_seed: int):
        self.master = int(master_seed)
        self.fourier = derive_seed(self.master, "fourier")
        self.permutation = derive_seed(self.master, "permutation")
        self.proposals = derive_seed(self.master, "proposals")
        self.gumbel = derive_seed(self.master, "gumbel")
        self.noise = derive_seed(self.master, "noise")

    def datum_noise(self, index: int) -> int:
        return derive_seed(self.noise, f"datum{index}")

    def as_dict(self):
        return {
            "master": self.master,
            "fourier": self.fourier,
            "permutation": self.permutation,
            "proposals": self.proposals,
            "gumbel": self.gumbel,
            "noise": self.noise,
        }
