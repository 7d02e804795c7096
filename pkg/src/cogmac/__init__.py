"""Throughput analysis and design of a multi-channel cognitive MAC with
cooperative sensing and p-persistent CSMA access."""
