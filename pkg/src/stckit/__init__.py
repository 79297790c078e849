"""Singing technique conversion toolkit.

Pipeline: audio -> WORLD-style vocoder frames (F0 / spectral envelope /
band aperiodicity) -> 60-dim MCC+AP features -> StarGAN converter ->
vocoder synthesis, with the F0 track bypassing the network.
"""

__version__ = "0.1.0"

TECHNIQUES = ("chest", "falsetto", "whistle", "raspy")
