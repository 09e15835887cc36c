"""
Numerical core for the two-component Novikov peakon lab
"""
