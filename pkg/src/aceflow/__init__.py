"""Artificial compressibility ensemble timestepping for Boussinesq convection."""
