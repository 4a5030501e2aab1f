"""Space-time block-diagonalization precoding for frequency-selective MIMO broadcast channels."""

__version__ = "0.1.0"
