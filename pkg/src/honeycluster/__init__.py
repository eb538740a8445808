"""Cluster honeypot attacker IPs into operator groups from Cowrie SSH logs."""

__version__ = "0.1.0"
