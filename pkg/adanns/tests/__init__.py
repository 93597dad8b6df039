"""
Test suite for adanns
"""
