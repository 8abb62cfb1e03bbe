"""
AQC Factorization Toolkit Modules
"""
