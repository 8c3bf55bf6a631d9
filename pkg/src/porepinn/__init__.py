"""Sine-activated physics-informed networks for solute transport in porous media."""
