"""Speaker identification from multifractal (MFDFA) spectra of speech."""

__version__ = "0.1.0"
