"""
Unimodal Response - susceptibility function Ψ(λ) of postcritically finite unimodal maps.
"""

__version__ = "1.0.0"
