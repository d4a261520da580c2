"""Incremental sensorimotor learning for an attentive 2-DOF head."""

__version__ = "0.1.0"
