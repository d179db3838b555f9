"""staffscribe: end-to-end transcription of polyphonic single-staff images."""

__version__ = "0.1.0"
