"""
adanns package: adaptive-representation approximate nearest neighbor search
"""

__version__ = "1.0.0"
__author__ = "adanns maintainers"
