"""
Core components: map model, charts, transfer operators and susceptibility.
"""
