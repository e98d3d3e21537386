"""IRS-assisted TDD multi-user MIMO simulator with DRL phase control."""

__version__ = "0.1.0"
