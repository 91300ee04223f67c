"""Combined-field-only integral equations for PEC scattering."""

__version__ = "0.1.0"
