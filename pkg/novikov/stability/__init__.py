"""
Stability identities, orbit fitting, modulation and peakon-train diagnostics
"""
