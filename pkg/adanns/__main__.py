"""
Entry point for `python -m adanns`
"""

from .main import main

main()
