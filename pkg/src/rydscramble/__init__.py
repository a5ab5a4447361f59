"""Information scrambling in Rydberg atom chains: PXP and van der Waals models, Loschmidt-echo
OTOCs, wavefront fitting, trajectory noise and scar diagnostics."""

__version__ = "0.1.0"
