"""
Grid, sampled fields and the exponential kernel
"""
