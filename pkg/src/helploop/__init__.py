"""Planning loop for a service robot that helps people in need."""

__version__ = "0.1.0"
